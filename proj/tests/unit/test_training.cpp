#include "gcnnlp/model.hpp"
#include "net_fixture.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace gcnnlp;
using namespace gcnnlp::net;
using testing::make_net_fixture;
using testing::tiny_config;

namespace {

std::string checkpoint_bytes(const Checkpoint& ck) {
  std::ostringstream out;
  write_checkpoint(out, ck);
  return out.str();
}

double mean_loss(std::span<const LossRecord> curve, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += curve[i].loss;
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(4, 0, 23);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
  CHECK(a == epoch_order(4, 0, 23));
  CHECK(a != epoch_order(4, 1, 23));
  CHECK(a != epoch_order(5, 0, 23));
  CHECK(epoch_order(4, 0, 0).empty());
}

TEST_CASE("eligibility per variant") {
  auto fx = make_net_fixture(1, 1, 1, 1, tiny_config(1));
  const auto* c = testing::find_sample(fx, true, true);
  const auto* m3 = testing::find_sample(fx, true, false);
  const auto* m6 = testing::find_sample(fx, false, true);
  REQUIRE(c);
  REQUIRE(m3);
  REQUIRE(m6);
  CHECK(eligible(Variant::LP, *m3));
  CHECK(eligible(Variant::LP, *m6));
  CHECK(eligible(Variant::IP3, *m3));
  CHECK_FALSE(eligible(Variant::IP3, *m6));
  CHECK_FALSE(eligible(Variant::IP6, *m3));
  CHECK(eligible(Variant::IP6, *c));
}

TEST_CASE("loss falls when fitting a single subject") {
  NetworkConfig c = tiny_config(2);
  c.max_updates = 200;
  c.schedule_switch = 200;
  c.learning_rate = 1e-3;
  auto fx = make_net_fixture(2, 1, 0, 0, c);
  const TrainResult r = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  REQUIRE(r.curve.size() == 200);
  CHECK(mean_loss(r.curve, 190, 200) < 0.5 * mean_loss(r.curve, 0, 10));
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    CHECK(r.curve[i].update == i + 1);
    CHECK(r.curve[i].sample == 0);
  }
}

TEST_CASE("training is bit reproducible and independent of the thread count") {
  NetworkConfig c = tiny_config(1);
  c.max_updates = 12;
  c.schedule_switch = 6;
  auto fx = make_net_fixture(1, 2, 1, 1, c);
  const TrainResult a = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  const TrainResult b = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  TrainOptions two;
  two.threads = 2;
  const TrainResult t = train(Variant::LP, c, fx.cohort.samples, fx.inputs, two);
  CHECK(checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint));
  CHECK(checkpoint_bytes(a.checkpoint) == checkpoint_bytes(t.checkpoint));
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss == t.curve[i].loss);
  CHECK(a.curve[5].learning_rate == c.learning_rate);
  CHECK(a.curve[6].learning_rate == c.late_learning_rate);

  NetworkConfig other = c;
  other.seed = c.seed + 1;
  CHECK(checkpoint_bytes(train(Variant::LP, other, fx.cohort.samples, fx.inputs).checkpoint) !=
        checkpoint_bytes(a.checkpoint));
}

TEST_CASE("every eligible sample is visited once per epoch") {
  NetworkConfig c = tiny_config(1);
  c.max_updates = 8;
  c.schedule_switch = 8;
  auto fx = make_net_fixture(1, 2, 1, 1, c);
  const TrainResult lp = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  for (std::size_t epoch = 0; epoch < 2; ++epoch) {
    std::vector<std::size_t> seen;
    for (std::size_t i = 0; i < 4; ++i) seen.push_back(lp.curve[epoch * 4 + i].sample);
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3});
  }
  const TrainResult ip6 = train(Variant::IP6, c, fx.cohort.samples, fx.inputs);
  for (const LossRecord& r : ip6.curve) CHECK(fx.cohort.samples[r.sample].flag6());
  const TrainResult ip3 = train(Variant::IP3, c, fx.cohort.samples, fx.inputs);
  for (const LossRecord& r : ip3.curve) CHECK(fx.cohort.samples[r.sample].flag3());
}

TEST_CASE("replaying n-1 updates reproduces the loss recorded at update n") {
  NetworkConfig c = tiny_config(1);
  c.max_updates = 7;
  c.schedule_switch = 7;
  auto fx = make_net_fixture(1, 2, 1, 1, c);
  const TrainResult full = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  NetworkConfig shorter = c;
  shorter.max_updates = 6;
  shorter.schedule_switch = 6;
  TrainResult part = train(Variant::LP, shorter, fx.cohort.samples, fx.inputs);
  const LossRecord& last = full.curve.back();
  CHECK(loss_and_gradient(part.checkpoint.model, fx.inputs[last.sample], fx.cohort.samples[last.sample]) == last.loss);
}

TEST_CASE("resuming continues the same trajectory") {
  NetworkConfig c = tiny_config(1);
  c.max_updates = 10;
  c.schedule_switch = 4;
  auto fx = make_net_fixture(1, 2, 1, 1, c);
  const TrainResult full = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  NetworkConfig half = c;
  half.max_updates = 5;
  const TrainResult first = train(Variant::LP, half, fx.cohort.samples, fx.inputs);
  TrainOptions opts;
  opts.resume = &first.checkpoint;
  const TrainResult rest = train(Variant::LP, c, fx.cohort.samples, fx.inputs, opts);
  CHECK(rest.curve.size() == 5);
  CHECK(rest.curve.front().update == 6);
  CHECK(checkpoint_bytes(rest.checkpoint) == checkpoint_bytes(full.checkpoint));

  Checkpoint no_adam = first.checkpoint;
  no_adam.adam.reset();
  opts.resume = &no_adam;
  CHECK_THROWS_AS(train(Variant::LP, c, fx.cohort.samples, fx.inputs, opts), ConfigError);
  opts.resume = &first.checkpoint;
  CHECK_THROWS_AS(train(Variant::IP3, c, fx.cohort.samples, fx.inputs, opts), ConfigError);
}

TEST_CASE("a sample without month 6 trains only the month-3 path of LP") {
  NetworkConfig c = tiny_config(1);
  c.max_updates = 1;
  c.schedule_switch = 1;
  auto fx = make_net_fixture(1, 0, 1, 0, c);
  REQUIRE_FALSE(fx.cohort.samples[0].flag6());
  const GcnnModel before = make_model(Variant::LP, c);
  const TrainResult r = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  const GcnnModel& after = r.checkpoint.model;
  for (int ch = 0; ch < 2; ++ch) {
    CHECK(after.channels[ch].head6->weight.value.identical(before.channels[ch].head6->weight.value));
    CHECK(after.channels[ch].convs[4].gamma.value.identical(before.channels[ch].convs[4].gamma.value));
    CHECK_FALSE(after.channels[ch].head3->weight.value.identical(before.channels[ch].head3->weight.value));
  }
}

TEST_CASE("training errors") {
  NetworkConfig c = tiny_config(1);
  auto fx = make_net_fixture(1, 0, 1, 0, c);
  CHECK_THROWS_AS(train(Variant::LP, c, std::span<const LongitudinalSample>{}, std::span<const NetworkInputs>{}), Error);
  CHECK_THROWS_WITH_AS(train(Variant::IP6, c, fx.cohort.samples, fx.inputs),
                       doctest::Contains("no training sample"), Error);
  CHECK_THROWS_AS(train(Variant::LP, c, fx.cohort.samples, std::span<const NetworkInputs>{}), Error);
  NetworkConfig bad = c;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(train(Variant::LP, bad, fx.cohort.samples, fx.inputs), ConfigError);
  NetworkConfig huge = c;
  huge.learning_rate = 1e300;
  huge.max_updates = 5;
  huge.schedule_switch = 5;
  CHECK_THROWS_WITH_AS(train(Variant::LP, huge, fx.cohort.samples, fx.inputs),
                       doctest::Contains("diverged at update"), DivergenceError);
}

TEST_CASE("loss curve format") {
  const std::vector<LossRecord> curve{{1, 2.5, 1e-4, 0}, {2, 0.125, 1e-5, 3}};
  std::ostringstream out;
  write_loss_curve(out, curve);
  CHECK(out.str() == "1 2.5 1e-04\n2 0.125 1e-05\n");
}

TEST_CASE("checkpoint round trip, prediction and corruption") {
  NetworkConfig c = tiny_config(1);
  c.max_updates = 3;
  c.schedule_switch = 3;
  auto fx = make_net_fixture(1, 2, 0, 0, c);
  const TrainResult r = train(Variant::LP, c, fx.cohort.samples, fx.inputs);
  const std::string bytes = checkpoint_bytes(r.checkpoint);
  std::istringstream in(bytes);
  const Checkpoint back = read_checkpoint(in);
  CHECK(checkpoint_bytes(back) == bytes);
  CHECK(back.updates == 3);
  CHECK(back.vertex_count == 42);
  CHECK(back.echo.get("variant", "") == "gcnn-lp");
  CHECK(back.model.scales.month3 == r.checkpoint.model.scales.month3);
  CHECK(describe_checkpoint(back).find("gcnn-lp") != std::string::npos);

  const auto& s = fx.cohort.samples[0];
  const auto pi = geodesic::parameterize_surface(s.month1.inner, c.grid);
  const auto po = geodesic::parameterize_surface(s.month1.outer, c.grid);
  const Prediction a = predict(r.checkpoint, s.month1, pi, po);
  const Prediction b = predict(back, s.month1, pi, po);
  CHECK(testing::same_positions(a.month6->outer, b.month6->outer));

  Checkpoint zero = r.checkpoint;
  for (Parameter* p : zero.model.parameters()) p->value.fill(0.0);
  const Prediction z = predict(zero, s.month1, pi, po);
  CHECK(testing::same_positions(z.month3->inner, s.month1.inner));
  CHECK(testing::same_positions(z.month6->outer, s.month1.outer));

  const SurfacePair other{make_icosphere(2), make_icosphere(2, 2.0)};
  CHECK_THROWS_AS(predict(r.checkpoint, other, pi, po), ValidationError);

  std::istringstream trailing(bytes + "x");
  CHECK_THROWS_WITH_AS(read_checkpoint(trailing), doctest::Contains("trailing"), ParseError);
  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(truncated), ParseError);
  std::string wrong_version = bytes;
  wrong_version[4] ^= 0x7f;
  std::istringstream wv(wrong_version);
  CHECK_THROWS_AS(read_checkpoint(wv), ParseError);

  testing::TempDir dir("ckpt");
  save_checkpoint(dir / "lp.ckpt", r.checkpoint);
  CHECK(testing::read_bytes(dir / "lp.ckpt") == bytes);
  CHECK(checkpoint_bytes(load_checkpoint(dir / "lp.ckpt")) == bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

  TrainOptions lean;
  lean.keep_adam = false;
  const TrainResult slim = train(Variant::LP, c, fx.cohort.samples, fx.inputs, lean);
  CHECK_FALSE(slim.checkpoint.adam.has_value());
  std::istringstream sin(checkpoint_bytes(slim.checkpoint));
  CHECK_FALSE(read_checkpoint(sin).adam.has_value());
}
