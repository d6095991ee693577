#include "doctest.h"
#include "properties.hpp"

TEST_SUITE("properties") {
  TEST_CASE("randomized property suites") {
    for (const auto& r : lprt::test::all_properties(10000)) {
      INFO(r.name << ": " << r.first_failure);
      CHECK(r.cases == 10000);
      CHECK(r.failures == 0);
    }
  }
}
