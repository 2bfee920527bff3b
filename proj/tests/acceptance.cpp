// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
// CVC_ACCEPTANCE_ONLY=3,5 restricts the run to the listed criteria.

#include "cvc/cli/app.hpp"
#include "cvc/cli/toy_corpus.hpp"
#include "cvc/convert/pipeline.hpp"
#include "cvc/error.hpp"
#include "cvc/eval/embedding.hpp"
#include "cvc/eval/report.hpp"
#include "cvc/losses/gan.hpp"
#include "cvc/losses/nce.hpp"
#include "cvc/losses/objective.hpp"
#include "cvc/train/trainer.hpp"
#include "support.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

using namespace cvc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RowMatrix<double> unit_rows(int rows, int dim, Rng& rng) {
  RowMatrix<double> m(rows, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  for (int r = 0; r < rows; ++r) m.row(r).normalize();
  return m;
}

// ---------------------------------------------------------------- 1
Outcome loss_closed_forms() {
  double worst = 0.0;
  for (int n : {1, 7, 255}) {
    const std::vector<double> q = {0.6, 0.8};
    RowMatrix<double> negs(n, 2);
    for (int i = 0; i < n; ++i) negs.row(i) << 0.6, 0.8;
    worst = std::max(worst, std::abs(losses::nce_single(q, q, negs, 0.07) - std::log(n + 1.0)));
  }
  const Tensor<double> zero(1, 8, 8, 0.0), one(1, 8, 8, 1.0);
  const double gan_log = losses::gan_loss(zero, zero, losses::GanVariant::log_saturating, losses::GanSide::discriminator).value;
  const double gan_ls = losses::gan_loss(one, zero, losses::GanVariant::least_squares, losses::GanSide::discriminator).value;
  const double gan_err = std::abs(gan_log - 2.0 * std::numbers::ln2);
  return {worst < 1e-9 && gan_err < 1e-9 && gan_ls == 0.0,
          "max |nce - ln(N+1)| = " + fmt(worst) + ", |gan - 2ln2| = " + fmt(gan_err) + ", LS perfect = " + fmt(gan_ls)};
}

// ---------------------------------------------------------------- 2
Outcome oracle_equivalence() {
  Rng rng(2024);
  double worst = 0.0;
  for (int config = 0; config < 100; ++config) {
    const int layers = 1 + static_cast<int>(uniform_index(rng, 3));
    const int dim = 1 + static_cast<int>(uniform_index(rng, 32));
    const double tau = 0.05 + uniform01(rng);
    std::vector<losses::PatchBundle<double>> bundles;
    for (int l = 0; l < layers; ++l) {
      const int rows = 2 + static_cast<int>(uniform_index(rng, 15));
      losses::PatchBundle<double> b;
      b.layer_index = l + 1;
      b.queries = unit_rows(rows, dim, rng);
      b.keys = unit_rows(rows, dim, rng);
      b.temperature = tau;
      for (int i = 0; i < rows; ++i) b.query_ids.push_back(i), b.key_ids.push_back(i);
      bundles.push_back(std::move(b));
    }
    double oracle = 0.0;
    for (const auto& b : bundles)
      for (Eigen::Index n = 0; n < b.queries.rows(); ++n) {
        const double pos = std::exp(b.queries.row(n).dot(b.keys.row(n)) / tau);
        double denom = pos;
        for (Eigen::Index m = 0; m < b.keys.rows(); ++m)
          if (m != n) denom += std::exp(b.queries.row(n).dot(b.keys.row(m)) / tau);
        oracle += -std::log(pos / denom);
      }
    worst = std::max(worst, test::rel_err(losses::nce_multilayer(bundles, false, false).value, oracle));
  }
  return {worst < 1e-6, "max relative error over 100 configurations = " + fmt(worst)};
}

// ---------------------------------------------------------------- 3
Outcome gradient_fidelity() {
  model::GeneratorConfig gc;
  gc.base_channels = 8;
  gc.n_resnet_blocks = 1;
  model::ProjectionConfig pc;
  pc.selected_layers = {1, 2, 3, 4, 5};
  pc.patches_per_layer = 16;
  pc.embed_dim = 16;
  model::Generator<double> g(gc);
  model::Discriminator<double> d(model::DiscriminatorConfig{2, 8});
  auto heads = model::make_projection_heads(g, pc);
  Rng init(3);
  g.init(init, 0.2);
  d.init(init, 0.2);
  heads.init(init, 0.2);
  losses::ModelHandles<double> h{&g, &d, &heads};
  const auto x = test::random_tensor(1, 16, 16, 4), y = test::random_tensor(1, 16, 16, 5);
  Rng rng(6);
  const auto plan = losses::sample_patch_plan(g, pc, 16, 16, rng);
  const losses::LossWeights w{1.0, 1.0};

  auto params = g.parameters();
  for (auto* p : heads.parameters()) params.push_back(p);
  nn::zero_grads(params);
  losses::total_loss(h, x, y, w, losses::GanVariant::least_squares, plan, true);

  // A central difference is only a reference where the loss is smooth on
  // [theta - h, theta + h]; ReLU/LeakyReLU kinks inside that interval show up
  // as disagreeing one-sided slopes and are reported, not counted.
  const double step = 1e-5;
  const auto loss = [&] { return losses::total_loss(h, x, y, w, losses::GanVariant::least_squares, plan, false).total; };
  const double f0 = loss();
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f0) / step;
  Rng pick(8);
  int checked = 0, ok = 0, kinks = 0;
  double worst = 0.0;
  for (auto* p : params) {
    const std::size_t i = uniform_index(pick, p->size());
    const double keep = p->value[i];
    p->value[i] = keep + step;
    const double up = loss();
    p->value[i] = keep - step;
    const double down = loss();
    p->value[i] = keep;
    const double fwd = (up - f0) / step, bwd = (f0 - down) / step;
    if (std::abs(fwd - bwd) > 1e-3 * std::max(std::abs(fwd), std::abs(bwd)) + noise) {
      ++kinks;
      continue;
    }
    const double numeric = (up - down) / (2 * step);
    const double diff = std::abs(numeric - p->grad[i]);
    const double scale = std::max(std::abs(numeric), std::abs(p->grad[i]));
    const double rel = diff <= noise ? 0.0 : diff / scale;
    if (std::getenv("CVC_ACCEPTANCE_VERBOSE")) std::cerr << p->name << "[" << i << "] " << p->grad[i] << " " << numeric << "\n";
    worst = std::max(worst, rel);
    ++checked;
    if (rel <= 1e-3) ++ok;
  }
  return {checked >= 20 && ok == checked,
          std::to_string(ok) + "/" + std::to_string(checked) + " parameters within 1e-3 (worst " + fmt(worst) + "), " +
              std::to_string(kinks) + " skipped at an activation kink, roundoff floor " + fmt(noise)};
}

// ---------------------------------------------------------------- 4
Outcome architecture_invariants() {
  model::GeneratorConfig gc;
  gc.base_channels = 16;
  model::Generator<float> g(gc);
  model::ProjectionConfig pc;
  auto heads = model::make_projection_heads(g, pc);
  Rng init(7);
  g.init(init);
  heads.init(init);

  bool shapes = true;
  for (int t : {4, 64, 196, 200}) {
    const auto out = g.forward(test::random_tensorf(1, 80, t, static_cast<std::uint64_t>(t)));
    shapes = shapes && out.channels == 1 && out.height == 80 && out.width == t;
  }

  const auto x = test::random_tensorf(1, 80, 196, 8);
  const auto fx = g.forward(x);
  const auto src = model::encoder_features(g, x, pc.selected_layers);
  const auto gen = model::encoder_features(g, fx, pc.selected_layers);
  Rng rng(9);
  bool ids_equal = true;
  double norm_err = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const auto plan = losses::sample_patch_plan(g, pc, 80, 196, rng);
    const auto keys = model::project_patches(heads, src, plan.source);
    const auto queries = model::project_patches(heads, gen, plan.source);
    for (const auto& b : losses::make_bundles(queries, keys, pc.temperature)) {
      ids_equal = ids_equal && b.query_ids == b.key_ids;
      if (draw % 50 == 0)
        for (Eigen::Index r = 0; r < b.queries.rows(); ++r)
          norm_err = std::max({norm_err, std::abs(b.queries.row(r).norm() - 1.0), std::abs(b.keys.row(r).norm() - 1.0)});
    }
  }
  return {shapes && ids_equal && norm_err < 1e-5,
          std::string("shape ") + (shapes ? "ok" : "broken") + ", positive ids " + (ids_equal ? "equal" : "differ") +
              " over 1000 draws, max |norm - 1| = " + fmt(norm_err)};
}

// ---------------------------------------------------------------- 5 and 8
struct ToyRun {
  fs::path dir;
  double seconds = 0.0;
  int code = -1;
  std::string err;
};

ToyRun train_toy(const fs::path& toy, const fs::path& out) {
  ToyRun r;
  r.dir = out;
  fs::remove_all(out);
  std::ostringstream so, se;
  const auto t0 = std::chrono::steady_clock::now();
  r.code = cli::run({"train", "--source", (toy / "spk_a").string(), "--target", (toy / "spk_b").string(), "--out",
                     out.string(), "--set", "model.base_channels=16", "--set", "model.disc_base_channels=16", "--set",
                     "train.epochs=100", "--set", "train.checkpoint_every_epochs=25"},
                    so, se);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.err = se.str();
  return r;
}

std::map<int, double> epoch_mean_nce(const fs::path& log) {
  std::map<int, std::pair<double, int>> acc;
  std::ifstream in(log);
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    auto& a = acc[j["epoch"].get<int>()];
    a.first += j["nce"].get<double>();
    ++a.second;
  }
  std::map<int, double> out;
  for (const auto& [e, a] : acc) out[e] = a.first / a.second;
  return out;
}

struct Shared {
  fs::path work;
  fs::path toy;
  std::optional<ToyRun> first_run;
};

Outcome end_to_end(Shared& s) {
  fs::remove_all(s.toy);
  const auto corpus = cli::make_toy_corpus(s.toy, {});
  const auto na = corpus.a.index.entries.size(), nb = corpus.b.index.entries.size();
  if (na != 50 || nb != 50)
    return {false, "toy corpus kept " + std::to_string(na) + "+" + std::to_string(nb) + " of 50+50 clips"};

  s.first_run = train_toy(s.toy, s.work / "run1");
  const auto& run = *s.first_run;
  if (run.code != 0) return {false, "training failed: " + run.err};
  const auto nce = epoch_mean_nce(run.dir / "loss_log.jsonl");
  const double first = nce.at(1), last = nce.at(100);
  const double ratio = last / first;

  // Convert every source clip and score it against both speakers.
  const auto ckpt = run.dir / "ckpt_epoch100.ckpt";
  const auto source_index = audio::load_corpus(s.toy / "spk_a");
  const auto manifest = convert::batch_convert(source_index, convert::ConversionModel::load(ckpt),
                                               convert::VocoderHandle{}, s.work / "converted");
  eval::FallbackEmbedder embedder;
  const auto speaker_mean = [&](const audio::CorpusIndex& index, const std::string& id) {
    std::vector<eval::SpeakerEmbedding> all;
    for (const auto& e : index.entries) all.push_back(embedder.embed_file(e.wav, e.utterance_id));
    return eval::mean_embedding(all, id);
  };
  const auto source_ref = speaker_mean(source_index, "spk_a");
  const auto target_ref = speaker_mean(audio::load_corpus(s.toy / "spk_b"), "spk_b");
  int closer = 0;
  for (const auto& item : manifest.items) {
    const auto e = embedder.embed_file(item.output_path, item.utterance_id);
    if (eval::cosine_similarity(e, target_ref) > eval::cosine_similarity(e, source_ref)) ++closer;
  }
  const auto total = manifest.items.size() + manifest.failures.size();
  const double frac = total == 0 ? 0.0 : static_cast<double>(closer) / static_cast<double>(total);

  const bool time_ok = run.seconds <= 45 * 60;
  const bool nce_ok = ratio < 0.5;
  const bool sim_ok = frac >= 0.7;
  return {time_ok && nce_ok && sim_ok,
          "train " + fmt(run.seconds / 60.0, 3) + " min (<= 45), NCE epoch100/epoch1 = " + fmt(last, 6) + "/" +
              fmt(first, 6) + " = " + fmt(ratio, 3) + " (< 0.5), closer to target in " + std::to_string(closer) + "/" +
              std::to_string(total) + " = " + fmt(100.0 * frac, 3) + "% (>= 70%)"};
}

Outcome determinism(Shared& s) {
  if (!s.first_run) {
    fs::remove_all(s.toy);
    cli::make_toy_corpus(s.toy, {});
    s.first_run = train_toy(s.toy, s.work / "run1");
  }
  const auto second = train_toy(s.toy, s.work / "run2");
  if (s.first_run->code != 0 || second.code != 0) return {false, "a training run failed: " + s.first_run->err + second.err};
  const auto a = slurp(s.first_run->dir / "loss_log.jsonl"), b = slurp(second.dir / "loss_log.jsonl");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  return {!a.empty() && a == b, std::to_string(lines) + " log lines, logs " + (a == b ? "identical" : "differ")};
}

// ---------------------------------------------------------------- 6
Outcome ablation_harness(const Shared& s) {
  const auto dir = s.work / "ablation";
  fs::remove_all(dir);
  cli::ToyCorpusOptions o;
  o.clips_per_speaker = 6;
  o.clip_duration_s = 1.0;
  o.build.min_duration_s = 0.5;
  const auto toy = cli::make_toy_corpus(dir / "toy", o);

  train::ModelConfig models;
  models.generator.base_channels = 4;
  models.generator.n_resnet_blocks = 2;
  models.discriminator.base_channels = 4;
  models.projection.selected_layers = {1, 2, 3, 4};
  models.projection.patches_per_layer = 32;
  models.projection.embed_dim = 16;
  train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.checkpoint_every_epochs = 1;
  train::TrainOptions opts;
  opts.out_dir = dir / "runs";
  opts.crop.duration_s = 0.5;
  const auto pair = train::DomainPair::load(toy.a_dir, toy.b_dir);
  const auto res = train::ablate_identity(pair, models, cfg, opts);

  const auto& w = res.with_identity.history.front().generator;
  const auto& wo = res.without_identity.history.front().generator;
  const bool first_step_equal = w.gan == wo.gan && w.nce == wo.nce;
  const bool logs_paired = fs::exists(res.with_identity.loss_log) && fs::exists(res.without_identity.loss_log) &&
                           res.with_identity.history.size() == res.without_identity.history.size();

  eval::PairingSpec spec;
  spec.target_speaker = "spk_b";
  spec.gender = {{"spk_a", eval::Gender::male}, {"spk_b", eval::Gender::female}};
  const auto source = audio::load_corpus(toy.a_dir), target = audio::load_corpus(toy.b_dir);
  const auto report_for = [&](const train::TrainResult& r, const std::string& name) {
    const auto m = convert::batch_convert(source, convert::ConversionModel::load(r.final_checkpoint),
                                          convert::VocoderHandle{}, dir / name);
    return eval::build_report(m, target, spec, eval::FallbackEmbedder{});
  };
  const auto table = eval::ablation_report(report_for(res.with_identity, "conv_with"),
                                           report_for(res.without_identity, "conv_without"));
  const auto j = table.to_json();
  bool rows_ok = j["rows"].size() == 4;
  for (std::size_t i = 0; rows_ok && i < 4; ++i) rows_ok = j["rows"][i]["gender"] == eval::label(eval::kGenderRows[i]);
  const bool delta_col = j["columns"].size() == 3 && j["columns"][2] == "ΔImp." &&
                         table.to_text().find("ΔImp.") != std::string::npos;
  const auto& mf = table.rows[1];
  const bool filled = mf.with_identity && mf.without_identity && mf.relative_improvement;
  return {first_step_equal && logs_paired && rows_ok && delta_col && filled,
          std::string("first-step gan/nce ") + (first_step_equal ? "bitwise equal" : "differ") + ", logs " +
              (logs_paired ? "paired" : "unpaired") + ", rows " + (rows_ok ? "ok" : "wrong") + ", ΔImp. column " +
              (delta_col ? "present" : "missing") +
              (filled ? ", Male-Female ΔImp. = " + fmt(100.0 * *mf.relative_improvement, 3) + "%" : "")};
}

// ---------------------------------------------------------------- 7
Outcome report_fidelity() {
  using eval::Setting;
  const std::vector<Setting> settings = {Setting::one_to_one, Setting::many_to_one, Setting::many_unseen_to_one};
  const std::vector<std::string> systems = {"CVC", "CycleGAN", "VAE"};
  Rng rng(77);
  std::vector<eval::PairScore> scores;
  for (int i = 0; i < 2000; ++i) {
    eval::PairScore p;
    p.utterance_id = "u" + std::to_string(i);
    p.pair = eval::kGenderRows[uniform_index(rng, 4)];
    p.setting = settings[uniform_index(rng, 3)];
    p.system = systems[uniform_index(rng, p.setting == Setting::many_unseen_to_one ? 2 : 3)];
    p.similarity = 2.0 * uniform01(rng) - 1.0;
    scores.push_back(p);
  }
  const auto r = eval::aggregate(scores, settings, systems);

  const std::vector<std::pair<Setting, std::string>> table1 = {
      {Setting::one_to_one, "CVC"},  {Setting::one_to_one, "CycleGAN"},  {Setting::one_to_one, "VAE"},
      {Setting::many_to_one, "CVC"}, {Setting::many_to_one, "CycleGAN"}, {Setting::many_to_one, "VAE"},
      {Setting::many_unseen_to_one, "CVC"}, {Setting::many_unseen_to_one, "CycleGAN"}};
  const bool columns_ok = r.columns() == table1;
  const auto j = r.to_json();
  bool rows_ok = j["rows"].size() == 4;
  for (std::size_t i = 0; rows_ok && i < 4; ++i)
    rows_ok = j["rows"][i]["gender"] == eval::label(eval::kGenderRows[i]) && j["rows"][i]["cells"].size() == 3;

  double worst = 0.0;
  for (auto row : eval::kGenderRows)
    for (const auto& [setting, system] : table1) {
      double sum = 0.0;
      int n = 0;
      for (const auto& p : scores)
        if (p.pair == row && p.setting == setting && p.system == system) sum += p.similarity, ++n;
      const auto& c = r.cell(row, setting, system);
      worst = std::max(worst, n == 0 ? 1.0 : std::abs(*c.mean - sum / n));
    }
  return {columns_ok && rows_ok && worst < 1e-12,
          std::string("columns ") + (columns_ok ? "match" : "differ") + ", rows " + (rows_ok ? "match" : "differ") +
              ", max |cell - flat mean| = " + fmt(worst)};
}

}  // namespace

int main() {
  std::set<int> only;
  if (const char* env = std::getenv("CVC_ACCEPTANCE_ONLY")) {
    std::stringstream ss(env);
    for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
  }
  Shared shared;
  shared.work = test::scratch_dir("acceptance");
  shared.toy = shared.work / "toy";

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss closed forms", loss_closed_forms},
      {"contrastive loss equals the double-loop oracle", oracle_equivalence},
      {"analytic gradients match central differences", gradient_fidelity},
      {"shape and patch invariants", architecture_invariants},
      {"synthetic end-to-end training and conversion", [&] { return end_to_end(shared); }},
      {"identity ablation harness", [&] { return ablation_harness(shared); }},
      {"similarity report layout and aggregation", report_fidelity},
      {"repeat toy run gives an identical loss log", [&] { return determinism(shared); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << criteria[i].first << " (" << o.detail
              << ")" << std::endl;
  }
  return all ? 0 : 1;
}
