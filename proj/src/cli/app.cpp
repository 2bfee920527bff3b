#include "cvc/cli/app.hpp"

#include "cvc/cli/config.hpp"
#include "cvc/cli/toy_corpus.hpp"
#include "cvc/audio/wav_io.hpp"
#include "cvc/convert/pipeline.hpp"
#include "cvc/error.hpp"
#include "cvc/eval/report.hpp"
#include "cvc/train/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace cvc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string& require(const Config& c, const std::string& key, const std::string& flag) {
  const auto& v = c.get(key);
  if (v.empty()) throw UsageError("missing " + flag + " (config key '" + key + "')");
  return v;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  if (!out) throw Error("cli", "UnwritableOutput", file.string());
  out << text;
}

void write_run_files(const fs::path& dir, const Config& c, const json& artifacts) {
  fs::create_directories(dir);
  write_text(dir / "resolved_config.txt", c.snapshot());
  write_text(dir / "run_manifest.json",
             json{{"command", c.get("run.command")}, {"config", "resolved_config.txt"}, {"artifacts", artifacts}}.dump(2) + "\n");
}

train::TrainOptions train_options(const Config& c, const fs::path& out) {
  train::TrainOptions o;
  o.out_dir = out;
  if (!c.get("io.resume").empty()) o.resume = fs::path(c.get("io.resume"));
  o.mel = mel_config(c);
  o.crop = crop_spec(c);
  o.verify_isolation = c.get_bool("train.verify_isolation");
  return o;
}

int cmd_build_corpus(const Config& c, std::ostream& out, std::ostream& err) {
  const fs::path in = require(c, "io.in", "--in");
  const fs::path dir = require(c, "io.out", "--out");
  const auto report = audio::build_corpus(audio::discover_wavs(in, c.get("io.speaker")), dir, build_options(c));
  for (const auto& [wav, reason] : report.skipped) err << "skipped " << wav << ": " << reason << '\n';
  write_run_files(dir, c, {"index.json", "norm_stats.json", "features/"});
  out << "corpus " << dir.string() << ": " << report.index.entries.size() << " utterances, "
      << report.skipped.size() << " skipped\n";
  return kExitOk;
}

int cmd_make_toy_corpus(const Config& c, std::ostream& out) {
  const fs::path dir = require(c, "io.out", "--out");
  ToyCorpusOptions o;
  o.clips_per_speaker = static_cast<int>(c.get_int("toy.clips_per_speaker"));
  o.clip_duration_s = c.get_double("toy.clip_duration_s");
  o.seed = static_cast<std::uint64_t>(c.get_int("run.seed"));
  o.build = build_options(c);
  const auto toy = make_toy_corpus(dir, o);
  const auto a = toy_voice_a(), b = toy_voice_b();
  write_run_files(dir, c,
                  {{{"speaker", a.speaker_id}, {"gender", a.gender}, {"corpus", a.speaker_id}, {"wav", "wav/" + a.speaker_id}},
                   {{"speaker", b.speaker_id}, {"gender", b.gender}, {"corpus", b.speaker_id}, {"wav", "wav/" + b.speaker_id}}});
  out << a.speaker_id << ": " << toy.a.index.entries.size() << " clips (" << toy.a.skipped.size() << " skipped)\n"
      << b.speaker_id << ": " << toy.b.index.entries.size() << " clips (" << toy.b.skipped.size() << " skipped)\n"
      << "genders: " << a.speaker_id << ":" << a.gender << "," << b.speaker_id << ":" << b.gender << '\n';
  return kExitOk;
}

int cmd_train(const Config& c, std::ostream& out) {
  const auto pair = train::DomainPair::load(require(c, "io.source", "--source"), require(c, "io.target", "--target"));
  const fs::path dir = require(c, "io.out", "--out");
  write_run_files(dir, c, {"loss_log.jsonl", "ckpt_epoch*.ckpt"});
  const auto r = train::train(pair, model_config(c), train_config(c), train_options(c, dir));
  out << "trained " << r.epochs_completed << " epochs; checkpoint " << r.final_checkpoint.string() << '\n';
  return kExitOk;
}

int cmd_ablate(const Config& c, std::ostream& out) {
  const auto pair = train::DomainPair::load(require(c, "io.source", "--source"), require(c, "io.target", "--target"));
  const fs::path dir = require(c, "io.out", "--out");
  write_run_files(dir, c, {"with_identity/", "without_identity/", "ablation_report.json", "ablation_report.txt"});
  const auto r = train::ablate_identity(pair, model_config(c), train_config(c), train_options(c, dir));
  const auto scaffold = eval::ablation_scaffold();
  write_text(dir / "ablation_report.json", scaffold.to_json().dump(2) + "\n");
  write_text(dir / "ablation_report.txt", scaffold.to_text());
  out << "with identity: " << r.with_identity.final_checkpoint.string() << '\n'
      << "without identity: " << r.without_identity.final_checkpoint.string() << '\n';
  return kExitOk;
}

audio::CorpusIndex index_for_conversion(const fs::path& in) {
  if (fs::exists(in / "index.json")) return audio::load_corpus(in);
  audio::CorpusIndex index;
  index.root = in;
  for (const auto& src : audio::discover_wavs(in)) {
    audio::CorpusEntry e;
    e.utterance_id = src.speaker_id + "_" + src.wav.stem().string();
    e.speaker_id = src.speaker_id;
    e.wav = src.wav;
    index.entries.push_back(std::move(e));
  }
  return index;
}

int cmd_convert(const Config& c, std::ostream& out, std::ostream& err) {
  const auto model = convert::ConversionModel::load(require(c, "io.ckpt", "--ckpt"));
  const fs::path in = require(c, "io.in", "--in");
  const fs::path dest = require(c, "io.out", "--out");
  const auto vocoder = vocoder_handle(c);

  if (fs::is_regular_file(in)) {
    const auto w = convert::convert(audio::load_and_resample(in, model.mel.sample_rate_hz), model, vocoder);
    if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
    audio::write_wav(dest, w.samples, w.sample_rate_hz);
    write_run_files(dest.parent_path().empty() ? fs::path(".") : dest.parent_path(), c, {dest.filename().string()});
    out << "wrote " << dest.string() << " (" << w.duration_s() << " s)\n";
    return kExitOk;
  }
  const auto manifest =
      convert::batch_convert(index_for_conversion(in), model, vocoder, dest, static_cast<int>(c.get_int("convert.threads")));
  write_run_files(dest, c, {"manifest.json"});
  for (const auto& f : manifest.failures) err << "failed " << f.utterance_id << ": " << f.error << '\n';
  out << "converted " << manifest.items.size() << " utterances, " << manifest.failures.size() << " failed\n";
  return kExitOk;
}

int cmd_evaluate(const Config& c, std::ostream& out) {
  const auto manifest = convert::read_manifest(require(c, "io.manifest", "--manifest"));
  const auto target = audio::load_corpus(require(c, "io.target", "--target"));
  const fs::path dir = require(c, "io.out", "--out");
  auto spec = pairing_spec(c);
  if (spec.target_speaker.empty()) {
    const auto speakers = target.speakers();
    if (speakers.size() != 1) throw UsageError("target corpus has several speakers; set eval.target_speaker");
    spec.target_speaker = speakers.front();
  }
  const auto embedder = eval::make_embedder(c.get("eval.embedder"));
  const auto report = eval::build_report(manifest, target, spec, *embedder);
  fs::create_directories(dir);
  eval::write_report(report, dir / "report.json", dir / "report.txt");
  json artifacts = {"report.json", "report.txt"};
  out << report.to_text();

  if (!c.get("io.baseline_manifest").empty()) {
    auto base_spec = spec;
    base_spec.system = "CVC (w/o idt)";
    const auto baseline = eval::build_report(convert::read_manifest(c.get("io.baseline_manifest")), target, base_spec, *embedder);
    const auto ablation = eval::ablation_report(report, baseline);
    write_text(dir / "ablation_report.json", ablation.to_json().dump(2) + "\n");
    write_text(dir / "ablation_report.txt", ablation.to_text());
    artifacts.push_back("ablation_report.json");
    artifacts.push_back("ablation_report.txt");
    out << '\n' << ablation.to_text();
  }
  write_run_files(dir, c, artifacts);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive voice conversion toolkit", "cvc"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<long> seed;
  app.add_option("--config", config_path, "config file (default: $CVC_CONFIG)");
  app.add_option("--set", sets, "key=value override, repeatable");
  app.add_option("--seed", seed, "same as --set run.seed=N");

  // Flags are sugar for io.* keys and win over --set.
  std::map<std::string, std::string> flags;
  const auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };

  auto* build = app.add_subcommand("build-corpus", "featurize a directory of WAVs");
  flag(build, "--in", "io.in", "directory of WAVs (speaker = parent directory)");
  flag(build, "--out", "io.out", "corpus directory");
  flag(build, "--speaker", "io.speaker", "speaker id for every file");

  auto* toy = app.add_subcommand("make-toy-corpus", "synthesize a two-speaker corpus");
  flag(toy, "--out", "io.out", "output directory");

  auto* trn = app.add_subcommand("train", "train a source-to-target model");
  auto* abl = app.add_subcommand("ablate", "train with and without the identity term");
  for (auto* sub : {trn, abl}) {
    flag(sub, "--source", "io.source", "source corpus directory");
    flag(sub, "--target", "io.target", "target corpus directory");
    flag(sub, "--out", "io.out", "run directory");
    flag(sub, "--resume", "io.resume", "checkpoint to resume from");
  }

  auto* conv = app.add_subcommand("convert", "convert a WAV file or a directory/corpus");
  flag(conv, "--ckpt", "io.ckpt", "checkpoint");
  flag(conv, "--in", "io.in", "WAV file, WAV directory or corpus directory");
  flag(conv, "--out", "io.out", "output WAV (single file) or directory");
  flag(conv, "--vocoder", "convert.vocoder", "griffin_lim | external");
  flag(conv, "--vocoder-endpoint", "convert.vocoder_endpoint", "external vocoder executable");

  auto* ev = app.add_subcommand("evaluate", "speaker-similarity report for a conversion manifest");
  flag(ev, "--manifest", "io.manifest", "manifest.json from convert");
  flag(ev, "--target", "io.target", "target corpus directory");
  flag(ev, "--out", "io.out", "report directory");
  flag(ev, "--baseline-manifest", "io.baseline_manifest", "manifest of the w/o-identity model");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    std::vector<std::string> overrides = sets;
    if (seed) overrides.push_back("run.seed=" + std::to_string(*seed));
    for (const auto& [k, v] : flags) overrides.push_back(k + "=" + v);
    overrides.push_back("run.command=" + command);
    const Config c = resolve_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides);

    if (command == "build-corpus") return cmd_build_corpus(c, out, err);
    if (command == "make-toy-corpus") return cmd_make_toy_corpus(c, out);
    if (command == "train") return cmd_train(c, out);
    if (command == "ablate") return cmd_ablate(c, out);
    if (command == "convert") return cmd_convert(c, out, err);
    return cmd_evaluate(c, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cvc::cli
