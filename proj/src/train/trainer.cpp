#include "cvc/train/trainer.hpp"

#include "cvc/error.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace cvc::train {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& kind, const std::string& detail) { throw Error("training_engine", kind, detail); }

json train_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"seed", c.seed},
          {"lambda_nce", c.weights.lambda_nce},
          {"mu_identity", c.weights.mu_identity},
          {"gan_variant", losses::to_string(c.gan_variant)},
          {"checkpoint_every_epochs", c.checkpoint_every_epochs},
          {"lr_schedule", c.lr_schedule == LrSchedule::constant ? "constant" : "linear_decay_after_half"}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.weights.lambda_nce = j.at("lambda_nce").get<double>();
  c.weights.mu_identity = j.at("mu_identity").get<double>();
  c.gan_variant = losses::parse_gan_variant(j.at("gan_variant").get<std::string>());
  c.checkpoint_every_epochs = j.at("checkpoint_every_epochs").get<int>();
  c.lr_schedule = j.at("lr_schedule").get<std::string>() == "constant" ? LrSchedule::constant
                                                                       : LrSchedule::linear_decay_after_half;
  return c;
}

void store_moments(model::Archive& a, const std::string& prefix, nn::Adam<float>& opt) {
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.add(prefix + ".m." + params[i]->name, params[i]->shape, opt.first_moments()[i]);
    a.add(prefix + ".v." + params[i]->name, params[i]->shape, opt.second_moments()[i]);
  }
}

void load_moments(const model::Archive& a, const std::string& prefix, nn::Adam<float>& opt) {
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = a.find(prefix + ".m." + params[i]->name);
    const auto* v = a.find(prefix + ".v." + params[i]->name);
    if (!m || !v || m->data.size() != params[i]->size() || v->data.size() != params[i]->size())
      throw Error("model_core", "CorruptCheckpoint", "optimizer moments for " + params[i]->name);
    opt.first_moments()[i] = m->data;
    opt.second_moments()[i] = v->data;
  }
}

std::vector<audio::MelSpectrogram> load_domain(const audio::CorpusIndex& index, const audio::NormStats& stats,
                                               int min_frames) {
  std::vector<audio::MelSpectrogram> out;
  for (const auto& e : index.entries) {
    auto m = audio::read_features(e.path);
    if (m.frames() < min_frames) continue;
    out.push_back(stats.normalize(m));
  }
  return out;
}

Tensor<float> crop_tensor(const audio::MelSpectrogram& m, const audio::CropSpec& crop, const audio::MelConfig& mel,
                          int frames, Rng& rng) {
  auto res = audio::crop_or_reject(m, crop, rng, mel);
  const auto* cropped = std::get_if<audio::MelSpectrogram>(&res);
  if (!cropped) fail("EmptyCorpus", "utterance shorter than the training window");
  audio::MelSpectrogram w = *cropped;
  w.values = cropped->values.leftCols(frames).eval();
  return audio::to_tensor<float>(w);
}

void scale_grads(const nn::ParamRefs<float>& params, float k) {
  if (k == 1.0f) return;
  for (auto* p : params)
    for (auto& g : p->grad) g *= k;
}

bool is_divergence(const Error& e) {
  return e.module() == "losses" && (e.kind() == "NonFiniteLoss" || e.kind() == "NonFiniteLogits");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) fail("InvalidConfig", "epochs must be positive");
  if (batch_size < 1) fail("InvalidConfig", "batch_size must be positive");
  if (!(lr > 0.0)) fail("InvalidConfig", "lr must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
    fail("InvalidConfig", "Adam betas must lie in [0, 1)");
  if (checkpoint_every_epochs < 1) fail("InvalidConfig", "checkpoint_every_epochs must be positive");
  weights.validate();
}

double TrainConfig::lr_at_epoch(int epoch) const {
  if (lr_schedule == LrSchedule::constant) return lr;
  const int half = epochs / 2;
  if (epoch <= half) return lr;
  return lr * static_cast<double>(epochs - epoch + 1) / static_cast<double>(epochs - half + 1);
}

DomainPair DomainPair::load(const std::filesystem::path& source_dir, const std::filesystem::path& target_dir) {
  DomainPair p;
  p.source = audio::load_corpus(source_dir);
  p.target = audio::load_corpus(target_dir);
  if (!p.source.entries.empty()) p.source_stats = audio::load_corpus_stats(source_dir);
  if (!p.target.entries.empty()) p.target_stats = audio::load_corpus_stats(target_dir);
  return p;
}

void DomainPair::validate() const {
  if (source.entries.empty()) fail("EmptyCorpus", "source corpus has no utterances");
  if (target.entries.empty()) fail("EmptyCorpus", "target corpus has no utterances");
  std::set<std::string> ids;
  for (const auto& e : source.entries) ids.insert(e.utterance_id);
  for (const auto& e : target.entries)
    if (ids.contains(e.utterance_id)) fail("OverlappingDomains", "utterance " + e.utterance_id + " in both domains");
}

TrainState::TrainState(const ModelConfig& models, const TrainConfig& cfg)
    : generator(models.generator),
      discriminator(models.discriminator),
      heads(model::make_projection_heads(generator, models.projection)),
      generator_opt(generator_side_params(), {cfg.lr, cfg.adam_beta1, cfg.adam_beta2}),
      discriminator_opt(discriminator.parameters(), {cfg.lr, cfg.adam_beta1, cfg.adam_beta2}),
      rng(cfg.seed) {}

nn::ParamRefs<float> TrainState::generator_side_params() {
  auto params = generator.parameters();
  for (auto* p : heads.parameters()) params.push_back(p);
  return params;
}

std::unique_ptr<TrainState> initial_state(const ModelConfig& models, const TrainConfig& cfg) {
  auto state = std::make_unique<TrainState>(models, cfg);
  state->generator.init(state->rng);
  state->discriminator.init(state->rng);
  state->heads.init(state->rng);
  return state;
}

void save_checkpoint(const std::filesystem::path& path, TrainState& state, const CheckpointExtras& extras) {
  model::Archive a;
  a.metadata = {{"format", "cvc-checkpoint"},
                {"generator", model::to_json(state.generator.config())},
                {"discriminator", model::to_json(extras.models.discriminator)},
                {"projection", model::to_json(extras.models.projection)},
                {"train", train_json(extras.train)},
                {"epoch", state.epoch},
                {"step", state.step},
                {"seed", extras.train.seed},
                {"rng_state", serialize_rng(state.rng)},
                {"generator_opt_steps", state.generator_opt.steps()},
                {"discriminator_opt_steps", state.discriminator_opt.steps()},
                {"source_stats", audio::to_json(extras.source_stats)},
                {"target_stats", audio::to_json(extras.target_stats)},
                {"mel", audio::to_json(extras.mel)}};
  model::store_params(a, state.generator.parameters());
  model::store_params(a, state.discriminator.parameters());
  model::store_params(a, state.heads.parameters());
  store_moments(a, "opt.G", state.generator_opt);
  store_moments(a, "opt.D", state.discriminator_opt);
  model::write_archive(path, a);
}

std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                                            CheckpointExtras* extras) {
  const auto a = model::read_archive(path);
  try {
    const auto& m = a.metadata;
    ModelConfig models{model::generator_config_from_json(m.at("generator")),
                       model::discriminator_config_from_json(m.at("discriminator")),
                       model::projection_config_from_json(m.at("projection"))};
    auto state = std::make_unique<TrainState>(models, cfg);
    model::load_params(a, state->generator.parameters());
    model::load_params(a, state->discriminator.parameters());
    model::load_params(a, state->heads.parameters());
    load_moments(a, "opt.G", state->generator_opt);
    load_moments(a, "opt.D", state->discriminator_opt);
    state->generator_opt.set_steps(m.at("generator_opt_steps").get<long>());
    state->discriminator_opt.set_steps(m.at("discriminator_opt_steps").get<long>());
    state->epoch = m.at("epoch").get<int>();
    state->step = m.at("step").get<long>();
    state->rng = deserialize_rng(m.at("rng_state").get<std::string>());
    if (extras) {
      extras->models = models;
      extras->train = train_config_from_json(m.at("train"));
      extras->source_stats = audio::norm_stats_from_json(m.at("source_stats"));
      extras->target_stats = audio::norm_stats_from_json(m.at("target_stats"));
      extras->mel = audio::mel_config_from_json(m.at("mel"));
    }
    return state;
  } catch (const json::exception& e) {
    throw Error("model_core", "CorruptCheckpoint", path.string() + ": " + e.what());
  }
}

std::string to_json_line(const StepRecord& r) {
  json j = json::object();
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["gan"] = r.generator.gan;
  j["nce"] = r.generator.nce;
  if (r.generator.identity_enabled) j["identity"] = r.generator.identity;
  j["d_loss"] = r.d_loss;
  j["total"] = r.generator.total;
  return j.dump();
}

int training_frames(const audio::CropSpec& crop, const audio::MelConfig& mel, int stride_product) {
  const int frames = audio::frames_for_duration(crop.duration_s, mel);
  return frames - frames % stride_product;
}

std::uint64_t parameter_hash(const nn::ParamRefs<float>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

TrainResult train(const DomainPair& pair, const ModelConfig& models, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  pair.validate();
  models.generator.validate();
  models.discriminator.validate();
  models.projection.validate(models.generator.encoder_layers());

  const int crop_frames = audio::frames_for_duration(options.crop.duration_s, options.mel);
  const int window = training_frames(options.crop, options.mel, models.generator.stride_product());
  if (window < models.generator.stride_product()) fail("InvalidConfig", "crop duration shorter than one stride cell");
  const auto xs = load_domain(pair.source, pair.source_stats, crop_frames);
  const auto ys = load_domain(pair.target, pair.target_stats, crop_frames);
  if (xs.empty()) fail("EmptyCorpus", "no source utterance survives crop rejection");
  if (ys.empty()) fail("EmptyCorpus", "no target utterance survives crop rejection");

  std::filesystem::create_directories(options.out_dir);
  CheckpointExtras extras{models, cfg, pair.source_stats, pair.target_stats, options.mel};
  std::unique_ptr<TrainState> state =
      options.resume ? load_checkpoint(*options.resume, cfg) : initial_state(models, cfg);

  TrainResult result;
  result.loss_log = options.out_dir / "loss_log.jsonl";
  std::ofstream log(result.loss_log, options.resume ? std::ios::app : std::ios::trunc);
  if (!log) fail("UnwritableOutput", result.loss_log.string());

  std::optional<std::filesystem::path> last_good = options.resume;
  auto handles = state->handles();
  const auto g_side = state->generator_side_params();
  const auto d_params = state->discriminator.parameters();
  const int last_epoch = options.stop_after_epochs > 0 ? std::min(cfg.epochs, state->epoch + options.stop_after_epochs)
                                                       : cfg.epochs;
  const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);

  for (int epoch = state->epoch + 1; epoch <= last_epoch; ++epoch) {
    state->generator_opt.set_lr(cfg.lr_at_epoch(epoch));
    state->discriminator_opt.set_lr(cfg.lr_at_epoch(epoch));

    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(state->rng, i)]);

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = state->step + 1;
      try {
        std::vector<Tensor<float>> x_batch, y_batch;
        std::vector<losses::PatchPlan> plans;
        for (std::size_t i = begin; i < end; ++i) {
          x_batch.push_back(crop_tensor(xs[order[i]], options.crop, options.mel, window, state->rng));
          const auto& y = ys[uniform_index(state->rng, ys.size())];
          y_batch.push_back(crop_tensor(y, options.crop, options.mel, window, state->rng));
          plans.push_back(losses::sample_patch_plan(state->generator, models.projection, x_batch.back().height,
                                                    x_batch.back().width, state->rng));
        }
        const auto n = static_cast<double>(x_batch.size());

        std::vector<losses::TracedForward<float>> forwards;
        for (const auto& x : x_batch) forwards.push_back(losses::traced_forward(state->generator, x));

        // (a) discriminator update with G frozen
        const auto g_hash = options.verify_isolation ? parameter_hash(g_side) : 0;
        nn::zero_grads(d_params);
        for (std::size_t i = 0; i < x_batch.size(); ++i)
          rec.d_loss += losses::discriminator_loss(state->discriminator, y_batch[i], forwards[i].output,
                                                   cfg.gan_variant, true) / n;
        if (!std::isfinite(rec.d_loss)) throw Error("losses", "NonFiniteLoss", "discriminator objective");
        scale_grads(d_params, inv_batch);
        state->discriminator_opt.step();
        if (options.verify_isolation && parameter_hash(g_side) != g_hash)
          fail("IsolationViolation", "discriminator update changed generator-side parameters");

        // (b) generator + projection heads update
        const auto d_hash = options.verify_isolation ? parameter_hash(d_params) : 0;
        nn::zero_grads(g_side);
        rec.generator.identity_enabled = cfg.weights.mu_identity != 0.0;
        for (std::size_t i = 0; i < x_batch.size(); ++i) {
          const auto l = losses::total_loss_from(handles, std::move(forwards[i]), y_batch[i], cfg.weights,
                                                 cfg.gan_variant, plans[i], true);
          rec.generator.gan += l.gan / n;
          rec.generator.nce += l.nce / n;
          rec.generator.identity += l.identity / n;
          rec.generator.total += l.total / n;
        }
        scale_grads(g_side, inv_batch);
        state->generator_opt.step();
        if (options.verify_isolation && parameter_hash(d_params) != d_hash)
          fail("IsolationViolation", "generator update changed discriminator parameters");
      } catch (const Error& e) {
        if (!is_divergence(e)) throw;
        fail("DivergedLoss", "step " + std::to_string(rec.step) + ": " + e.what() + "; last good checkpoint: " +
                                 (last_good ? last_good->string() : std::string("none")));
      }

      ++state->step;
      log << to_json_line(rec) << '\n';
      if (options.on_step) options.on_step(rec);
      result.history.push_back(rec);
    }
    log.flush();
    state->epoch = epoch;
    result.epochs_completed = epoch;

    if (epoch % cfg.checkpoint_every_epochs == 0 || epoch == last_epoch) {
      const auto path = options.out_dir / ("ckpt_epoch" + std::to_string(epoch) + ".ckpt");
      save_checkpoint(path, *state, extras);
      last_good = path;
      result.final_checkpoint = path;
    }
  }
  if (result.final_checkpoint.empty() && last_good) result.final_checkpoint = *last_good;
  return result;
}

AblationResult ablate_identity(const DomainPair& pair, const ModelConfig& models, const TrainConfig& cfg,
                               const TrainOptions& options) {
  AblationResult out;
  TrainOptions with = options;
  with.out_dir = options.out_dir / "with_identity";
  out.with_identity = train(pair, models, cfg, with);

  TrainConfig ablated = cfg;
  ablated.weights.mu_identity = 0.0;
  TrainOptions without = options;
  without.out_dir = options.out_dir / "without_identity";
  out.without_identity = train(pair, models, ablated, without);
  return out;
}

}  // namespace cvc::train
