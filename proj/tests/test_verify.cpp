#include "doctest.h"
#include "gmml/verify.hpp"
#include "json.hpp"

using namespace gmml;

TEST_CASE("verification suite passes on several seeds") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const VerifyReport r = run_verification({seed, 25, Fault::none});
    for (const auto& c : r.checks) {
      INFO(c.name << " " << c.failure << " " << c.max_error);
      CHECK(c.passed);
    }
  }
}

TEST_CASE("an injected gradient fault is detected and reported") {
  const VerifyReport r = run_verification({0, 20, Fault::corrupt_gradient});
  CHECK_FALSE(r.all_passed());
  bool named = false;
  for (const auto& c : r.checks) {
    if (c.name == "gradient-fd" && c.failure == "gradient-fd-mismatch") {
      named = true;
      const auto inst = nlohmann::json::parse(c.failing_instance);
      CHECK(inst.contains("query"));
      CHECK(inst.contains("support"));
    }
  }
  CHECK(named);
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["all_passed"] == false);
}

TEST_CASE("relative error") {
  CHECK(relative_error(std::vector<double>{1, 0}, std::vector<double>{1, 0}) == 0.0);
  CHECK(relative_error(std::vector<double>{0, 0}, std::vector<double>{1e-9, 0}, 1e-6) == doctest::Approx(1e-3));
}
