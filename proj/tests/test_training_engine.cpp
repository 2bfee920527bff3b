#include <doctest.h>

#include "cvc/cli/toy_corpus.hpp"
#include "cvc/error.hpp"
#include "cvc/train/trainer.hpp"
#include "support.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace cvc;
using namespace cvc::train;

namespace {

std::string error_kind(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.qualified_name();
  }
  return "no error";
}

const cli::ToyCorpus& toy() {
  static const cli::ToyCorpus corpus = [] {
    cli::ToyCorpusOptions o;
    o.clips_per_speaker = 6;
    o.clip_duration_s = 1.0;
    o.build.min_duration_s = 0.5;
    return cli::make_toy_corpus(test::scratch_dir("train_toy"), o);
  }();
  return corpus;
}

ModelConfig small_models() {
  ModelConfig m;
  m.generator.base_channels = 4;
  m.generator.n_resnet_blocks = 2;
  m.discriminator.base_channels = 4;
  m.projection.selected_layers = {1, 2, 3, 4};
  m.projection.patches_per_layer = 32;
  m.projection.embed_dim = 16;
  return m;
}

TrainConfig small_train(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.seed = 5;
  c.checkpoint_every_epochs = 1;
  return c;
}

TrainOptions options_for(const std::filesystem::path& out) {
  TrainOptions o;
  o.out_dir = out;
  o.crop.duration_s = 0.5;
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> log_lines(const std::filesystem::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

DomainPair toy_pair() { return DomainPair::load(toy().a_dir, toy().b_dir); }

}  // namespace

TEST_CASE("lr schedule and config validation") {
  TrainConfig c;
  c.epochs = 10;
  CHECK(c.lr_at_epoch(1) == c.lr);
  CHECK(c.lr_at_epoch(10) == c.lr);
  c.lr_schedule = LrSchedule::linear_decay_after_half;
  CHECK(c.lr_at_epoch(5) == c.lr);
  CHECK(c.lr_at_epoch(10) < c.lr_at_epoch(6));
  CHECK(c.lr_at_epoch(10) >= 0.0);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK(error_kind([&] { bad.validate(); }) == "training_engine.InvalidConfig");
  bad = TrainConfig{};
  bad.lr = -1.0;
  CHECK(error_kind([&] { bad.validate(); }) == "training_engine.InvalidConfig");
}

TEST_CASE("training window is the crop trimmed to the stride multiple") {
  audio::MelConfig mel;
  CHECK(training_frames({2.0, audio::CropPolicy::random_crop}, mel, 4) == 196);
  CHECK(training_frames({0.5, audio::CropPolicy::random_crop}, mel, 4) == 48);
}

TEST_CASE("two runs with the same seed produce identical logs and parameters") {
  const auto pair = toy_pair();
  const auto a = train::train(pair, small_models(), small_train(2), options_for(test::scratch_dir("det_a")));
  const auto b = train::train(pair, small_models(), small_train(2), options_for(test::scratch_dir("det_b")));
  CHECK(a.history.size() == 12);
  CHECK(slurp(a.loss_log) == slurp(b.loss_log));
  CHECK(slurp(a.final_checkpoint) == slurp(b.final_checkpoint));

  auto other = small_train(2);
  other.seed = 6;
  const auto c = train::train(pair, small_models(), other, options_for(test::scratch_dir("det_c")));
  CHECK(slurp(a.loss_log) != slurp(c.loss_log));
}

TEST_CASE("resuming from a checkpoint continues bit-exactly") {
  const auto pair = toy_pair();
  const auto straight = train::train(pair, small_models(), small_train(4), options_for(test::scratch_dir("resume_full")));

  auto opts = options_for(test::scratch_dir("resume_split"));
  opts.stop_after_epochs = 2;
  const auto first = train::train(pair, small_models(), small_train(4), opts);
  CHECK(first.epochs_completed == 2);
  opts.stop_after_epochs = 0;
  opts.resume = first.final_checkpoint;
  const auto second = train::train(pair, small_models(), small_train(4), opts);
  CHECK(second.epochs_completed == 4);

  CHECK(slurp(straight.loss_log) == slurp(second.loss_log));
  std::unique_ptr<TrainState> s1 = load_checkpoint(straight.final_checkpoint, small_train(4));
  std::unique_ptr<TrainState> s2 = load_checkpoint(second.final_checkpoint, small_train(4));
  CHECK(parameter_hash(s1->generator_side_params()) == parameter_hash(s2->generator_side_params()));
  CHECK(parameter_hash(s1->discriminator.parameters()) == parameter_hash(s2->discriminator.parameters()));
  CHECK(s1->step == s2->step);
}

TEST_CASE("each update leaves the other player's parameters untouched") {
  auto opts = options_for(test::scratch_dir("isolation"));
  opts.verify_isolation = true;
  int steps = 0;
  opts.on_step = [&](const StepRecord&) { ++steps; };
  CHECK_NOTHROW(train::train(toy_pair(), small_models(), small_train(1), opts));
  CHECK(steps == 6);
}

TEST_CASE("log schema follows the identity weight") {
  auto cfg = small_train(1);
  const auto with = train::train(toy_pair(), small_models(), cfg, options_for(test::scratch_dir("log_with")));
  for (const auto& j : log_lines(with.loss_log)) {
    for (const char* key : {"step", "epoch", "gan", "nce", "identity", "d_loss", "total"}) CHECK(j.contains(key));
  }
  cfg.weights.mu_identity = 0.0;
  const auto without = train::train(toy_pair(), small_models(), cfg, options_for(test::scratch_dir("log_without")));
  const auto lines = log_lines(without.loss_log);
  CHECK(lines.size() == 6);
  for (const auto& j : lines) {
    CHECK_FALSE(j.contains("identity"));
    CHECK(j["total"].get<double>() == doctest::Approx(j["gan"].get<double>() + j["nce"].get<double>()));
  }
}

TEST_CASE("ablation runs share their first step") {
  const auto res = ablate_identity(toy_pair(), small_models(), small_train(1), options_for(test::scratch_dir("ablate")));
  const auto with = log_lines(res.with_identity.loss_log), without = log_lines(res.without_identity.loss_log);
  REQUIRE(!with.empty());
  REQUIRE(!without.empty());
  CHECK(with[0]["gan"] == without[0]["gan"]);
  CHECK(with[0]["nce"] == without[0]["nce"]);
  CHECK(with[0]["d_loss"] == without[0]["d_loss"]);
  CHECK(with[0].contains("identity"));
  CHECK_FALSE(without[0].contains("identity"));
}

TEST_CASE("zero contrastive and identity weights still train") {
  auto cfg = small_train(1);
  cfg.weights = {0.0, 0.0};
  const auto r = train::train(toy_pair(), small_models(), cfg, options_for(test::scratch_dir("gan_only")));
  for (const auto& rec : r.history) CHECK(rec.generator.total == rec.generator.gan);
}

TEST_CASE("checkpoint save/load/save is byte-identical") {
  const auto r = train::train(toy_pair(), small_models(), small_train(1), options_for(test::scratch_dir("ckpt_rt")));
  CheckpointExtras extras;
  auto state = load_checkpoint(r.final_checkpoint, small_train(1), &extras);
  const auto again = test::scratch_dir("ckpt_rt2") / "again.ckpt";
  save_checkpoint(again, *state, extras);
  CHECK(slurp(r.final_checkpoint) == slurp(again));
  CHECK(extras.models.generator.base_channels == 4);
  CHECK(extras.source_stats.mean.size() == 80);
}

TEST_CASE("empty and overlapping corpora are rejected") {
  const auto dir = test::scratch_dir("empty_corpus");
  audio::write_index({}, dir / "index.json");
  CHECK(error_kind([&] {
    const auto pair = DomainPair::load(dir, toy().b_dir);
    train::train(pair, small_models(), small_train(1), options_for(test::scratch_dir("empty_out")));
  }) == "training_engine.EmptyCorpus");

  auto pair = toy_pair();
  pair.target = pair.source;
  CHECK(error_kind([&] { pair.validate(); }) == "training_engine.OverlappingDomains");

  auto opts = options_for(test::scratch_dir("too_long"));
  opts.crop.duration_s = 5.0;
  CHECK(error_kind([&] { train::train(toy_pair(), small_models(), small_train(1), opts); }) == "training_engine.EmptyCorpus");
}

TEST_CASE("non-finite features stop training with DivergedLoss naming the checkpoint") {
  // Copy the source corpus and poison every feature file.
  const auto dir = test::scratch_dir("poison");
  std::filesystem::copy(toy().a_dir, dir, std::filesystem::copy_options::recursive);
  const auto index = audio::load_corpus(dir);
  for (const auto& e : index.entries) {
    auto m = audio::read_features(e.path);
    m.values.setConstant(std::numeric_limits<float>::infinity());
    audio::write_features(e.path, m);
  }
  const auto pair = DomainPair::load(dir, toy().b_dir);
  std::string message;
  try {
    train::train(pair, small_models(), small_train(1), options_for(test::scratch_dir("poison_out")));
  } catch (const Error& e) {
    CHECK(e.qualified_name() == "training_engine.DivergedLoss");
    message = e.what();
  }
  CHECK(message.find("last good checkpoint: none") != std::string::npos);
}
