#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "biasbound/dgp_lab.hpp"
#include "biasbound/error.hpp"
#include "biasbound/imbalance.hpp"

using namespace bb;

TEST_CASE("substreams are reproducible and distinct") {
  auto a = substream(42, 3), b = substream(42, 3), c = substream(42, 4);
  const auto va = a(), vb = b(), vc = c();
  CHECK(va == vb);
  CHECK(va != vc);
}

TEST_CASE("BB_SEED overrides the fallback") {
  ::unsetenv("BB_SEED");
  CHECK(seed_from_env(17) == 17);
  ::setenv("BB_SEED", "123", 1);
  CHECK(seed_from_env(17) == 123);
  ::setenv("BB_SEED", "garbage", 1);
  CHECK_THROWS_AS(seed_from_env(17), Error);
  ::unsetenv("BB_SEED");
}

TEST_CASE("example 1 oracle domain and sample") {
  CHECK_THROWS_AS(example1_oracle(0.5), Error);
  CHECK_THROWS_AS(example1_oracle(0.0), Error);
  const Sample s = example1_sample(0.1);
  CHECK(s.size() == 200);
  CHECK(s.count(1) == 100);
  CHECK_THROWS_AS(example1_sample(0.123), Error);
  const Example1Oracle o = example1_oracle(0.25);
  CHECK(o.c_dr == 0.0);
  CHECK(o.bias_a == doctest::Approx(0.0));
}

TEST_CASE("example 2 dataset") {
  const Example2Data ex = example2_dataset();
  CHECK(ex.sample.size() == 24);
  CHECK(ex.listed_pairs.size() == 10);
  CHECK(ex.subsample.size() == 12);
  const Sample round = Sample::parse_csv(example2_csv());
  CHECK(round.size() == 24);
  CHECK(*round.unit(0).y == round.unit(0).x[0]);
}

TEST_CASE("synthetic pool shape") {
  const Sample pool = synthetic_pool(1, 148, 1336);
  CHECK(pool.p() == 6);
  CHECK(pool.count(1) == 148);
  for (const auto& u : pool.units()) CHECK((*u.y == 0.0 || *u.y == 1.0));
}

TEST_CASE("simulation is independent of the thread count") {
  SimPlan plan;
  plan.replications = 4;
  plan.n1 = 20;
  plan.n0 = 40;
  plan.with_md = false;
  const SimTable one = run_simulation(plan, 1), three = run_simulation(plan, 3);
  std::ostringstream a, b;
  one.write_csv(a);
  three.write_csv(b);
  CHECK(a.str() == b.str());
  CHECK(one.rows.size() == 12);
  const double rate = one.improvement_rate(SimSpec::A);
  CHECK((rate >= 0.0 && rate <= 1.0));

  plan.n1 = 0;
  CHECK_THROWS_AS(run_simulation(plan), Error);
}

TEST_CASE("simulation rows carry the md magnitude when requested") {
  SimPlan plan;
  plan.replications = 1;
  plan.n1 = 15;
  plan.n0 = 30;
  plan.specs = {SimSpec::B};
  const SimTable t = run_simulation(plan, 1);
  REQUIRE(t.rows.size() == 1);
  if (!t.rows[0].skipped) {
    CHECK(t.rows[0].pre.m_md >= 0.0);
    CHECK(t.rows[0].post.n == 30);
  }
}

TEST_CASE("coverage harness runs and is deterministic") {
  CoveragePlan plan;
  plan.n = 200;
  plan.replications = 20;
  const CoverageResult a = run_coverage(plan, 1), b = run_coverage(plan, 2);
  CHECK(a.total == 20);
  CHECK(a.covered == b.covered);
}
