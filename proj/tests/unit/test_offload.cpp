#include <doctest.h>

#include <random>

#include "mosden/errors.hpp"
#include "mosden/offload.hpp"

using namespace mosden;

TEST_CASE("estimate follows the affine model") {
  CostParameters c{0.5, 10.0, 0.01};
  auto e = estimate(c, 60, 40, 100);
  CHECK(e.e_alpha == doctest::Approx(0.5 * 60 + 10.0 + 0.01 * 100));
  CHECK(e.e_beta == doctest::Approx(60 * (10.0 + 0.01 * 40)));
  CHECK_THROWS_AS(estimate(c, -1, 40, 100), NegativeInput);
  CHECK_THROWS_AS(estimate(c, 1, -40, 100), NegativeInput);
  CHECK_THROWS_AS(estimate(CostParameters{-1, 0, 0}, 1, 1, 1), NegativeInput);
}

TEST_CASE("decide prefers local processing only when strictly cheaper") {
  CHECK(decide(1.0, 2.0) == Strategy::ProcessLocally);
  CHECK(decide(2.0, 1.0) == Strategy::ForwardRaw);
  CHECK(decide(3.0, 3.0) == Strategy::ForwardRaw);
  CHECK(decide(0.0, 0.0) == Strategy::ForwardRaw);
}

TEST_CASE("plan breakdowns sum to their totals") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::uniform_int_distribution<std::int64_t> n(0, 500);
  for (int i = 0; i < 500; ++i) {
    CostParameters c{u(rng), u(rng), u(rng) / 100.0};
    auto p = plan(c, n(rng), n(rng), n(rng));
    for (const auto* est : {&p.process_locally, &p.forward_raw}) {
      double sum = 0;
      for (const auto& [k, v] : est->breakdown) sum += v;
      CHECK(sum == doctest::Approx(est->total()).epsilon(1e-12));
      CHECK(est->e_alpha >= 0.0);
      CHECK(est->e_beta >= 0.0);
    }
    CHECK(p.strategy == decide(p.process_locally.total(), p.forward_raw.total()));
  }
}

TEST_CASE("zero wake cost with no savings forwards raw") {
  // one sample, same bytes: processing can only add cost
  auto p = plan(CostParameters{0.1, 0.0, 0.01}, 1, 50, 50);
  CHECK(p.strategy == Strategy::ForwardRaw);
  // batching 60 samples behind one wake-up wins
  CHECK(plan(CostParameters{0.01, 1.0, 0.001}, 60, 50, 80).strategy == Strategy::ProcessLocally);
}

TEST_CASE("account turns counters into realized energy") {
  CostParameters c{0.5, 2.0, 0.01};
  auto e = account(CounterSnapshot{100, 3, 900}, c);
  CHECK(e.e_alpha == doctest::Approx(50.0));
  CHECK(e.e_beta == doctest::Approx(6.0 + 9.0));
  CHECK(e.component("processing") == doctest::Approx(50.0));
  CHECK(e.component("radio_wake") == doctest::Approx(6.0));
  CHECK(e.component("bytes") == doctest::Approx(9.0));

  auto zero = account(CounterSnapshot{100, 3, 900}, CostParameters{0.0, 1.0, 1.0});
  CHECK(zero.component("processing") == 0.0);

  auto m = parse_json(R"({"samples_ok":10,"messages_sent":2,"bytes_sent":100,"other":1})");
  auto snap = counters_from_metrics(m);
  CHECK(snap.samples_processed == 10);
  CHECK(snap.messages_sent == 2);
  CHECK(snap.bytes_sent == 100);
  CHECK_THROWS(counters_from_metrics(parse_json(R"({"samples_ok":10})")));
}
