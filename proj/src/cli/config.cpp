#include "cvc/cli/config.hpp"

#include "cvc/error.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cvc::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

const KeyInfo* find_key(const std::string& key) {
  for (const auto& k : schema())
    if (k.key == key) return &k;
  return nullptr;
}

std::optional<long> parse_long(const std::string& s) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string canonical(const KeyInfo& k, const std::string& raw) {
  const std::string v = trim(raw);
  const auto bad = [&](const std::string& what) -> std::string {
    throw UsageError("config key '" + k.key + "': " + what + " (got '" + v + "')");
  };
  switch (k.type) {
    case ValueType::integer: {
      const auto x = parse_long(v);
      if (!x) return bad("expected an integer");
      return std::to_string(*x);
    }
    case ValueType::real: {
      const auto x = parse_double(v);
      if (!x) return bad("expected a number");
      return format_double(*x);
    }
    case ValueType::boolean:
      if (v == "true" || v == "1" || v == "yes") return "true";
      if (v == "false" || v == "0" || v == "no") return "false";
      return bad("expected true or false");
    case ValueType::choice:
      for (const auto& c : k.choices)
        if (c == v) return v;
      return bad("expected one of " + [&] {
        std::string s;
        for (const auto& c : k.choices) s += (s.empty() ? "" : "|") + c;
        return s;
      }());
    case ValueType::text: return v;
  }
  return v;
}

std::pair<std::string, std::string> split_assignment(const std::string& a) {
  const auto eq = a.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + a + "'");
  return {trim(a.substr(0, eq)), a.substr(eq + 1)};
}

std::vector<int> parse_int_list(const Config& c, const std::string& key) {
  std::vector<int> out;
  for (const auto& item : split(c.get(key), ',')) {
    const auto v = parse_long(item);
    if (!v) throw UsageError("config key '" + key + "': expected comma-separated integers");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

nn::Norm parse_norm(const std::string& s) { return s == "none" ? nn::Norm::none : nn::Norm::instance; }

}  // namespace

const std::vector<KeyInfo>& schema() {
  using T = ValueType;
  static const std::vector<KeyInfo> keys = {
      {"run.command", T::choice, "", {"", "build-corpus", "train", "ablate", "convert", "evaluate", "make-toy-corpus"}, "subcommand that wrote this snapshot"},
      {"run.seed", T::integer, "0", {}, "seed for training and toy corpus synthesis"},
      {"io.in", T::text, "", {}, "input wav file or directory"},
      {"io.out", T::text, "", {}, "output file or run directory"},
      {"io.source", T::text, "", {}, "source-domain corpus directory"},
      {"io.target", T::text, "", {}, "target-domain corpus directory"},
      {"io.ckpt", T::text, "", {}, "checkpoint file"},
      {"io.resume", T::text, "", {}, "checkpoint to resume training from"},
      {"io.manifest", T::text, "", {}, "conversion manifest to evaluate"},
      {"io.baseline_manifest", T::text, "", {}, "manifest of the w/o-identity model, for the ablation table"},
      {"io.speaker", T::text, "", {}, "speaker id override for build-corpus"},
      {"frontend.sample_rate_hz", T::integer, "24000", {}, ""},
      {"frontend.n_fft", T::integer, "1024", {}, ""},
      {"frontend.frame_length_ms", T::integer, "25", {}, ""},
      {"frontend.frame_shift_ms", T::integer, "10", {}, ""},
      {"frontend.n_mels", T::integer, "80", {}, ""},
      {"frontend.fmin_hz", T::real, "0", {}, ""},
      {"frontend.fmax_hz", T::real, "12000", {}, ""},
      {"frontend.amplitude_floor", T::real, "1e-05", {}, ""},
      {"frontend.vad_threshold_db", T::real, "-40", {}, "relative to the utterance mean frame energy"},
      {"frontend.vad_min_run_frames", T::integer, "1", {}, ""},
      {"frontend.min_duration_s", T::real, "2", {}, "utterances shorter after VAD are skipped"},
      {"model.base_channels", T::integer, "64", {}, ""},
      {"model.n_resnet_blocks", T::integer, "9", {}, ""},
      {"model.n_downsample", T::integer, "2", {}, ""},
      {"model.norm", T::choice, "instance", {"instance", "none"}, ""},
      {"model.residual_output", T::boolean, "false", {}, ""},
      {"model.disc_layers", T::integer, "3", {}, ""},
      {"model.disc_base_channels", T::integer, "64", {}, ""},
      {"model.disc_norm", T::choice, "instance", {"instance", "none"}, ""},
      {"model.nce_layers", T::text, "1,2,3,4,9", {}, "encoder layers fed to projection heads"},
      {"model.patches_per_layer", T::integer, "256", {}, ""},
      {"model.embed_dim", T::integer, "256", {}, ""},
      {"model.temperature", T::real, "0.07", {}, ""},
      {"model.nce_mean_reduce", T::boolean, "false", {}, ""},
      {"train.epochs", T::integer, "1000", {}, ""},
      {"train.batch_size", T::integer, "1", {}, ""},
      {"train.lr", T::real, "0.0002", {}, ""},
      {"train.adam_beta1", T::real, "0.5", {}, ""},
      {"train.adam_beta2", T::real, "0.999", {}, ""},
      {"train.lambda_nce", T::real, "1", {}, ""},
      {"train.mu_identity", T::real, "1", {}, ""},
      {"train.gan_variant", T::choice, "least_squares", {"least_squares", "log_saturating"}, ""},
      {"train.checkpoint_every_epochs", T::integer, "100", {}, ""},
      {"train.lr_schedule", T::choice, "constant", {"constant", "linear_decay_after_half"}, ""},
      {"train.crop_duration_s", T::real, "2", {}, ""},
      {"train.crop_policy", T::choice, "random_crop", {"random_crop", "reject_short"}, ""},
      {"train.verify_isolation", T::boolean, "false", {}, ""},
      {"convert.vocoder", T::choice, "griffin_lim", {"griffin_lim", "external"}, ""},
      {"convert.vocoder_endpoint", T::text, "", {}, "executable: <endpoint> <features.cvcf> <out.wav>"},
      {"convert.griffin_lim_iterations", T::integer, "32", {}, ""},
      {"convert.threads", T::integer, "1", {}, ""},
      {"eval.embedder", T::text, "fallback", {}, "fallback or external:<command>"},
      {"eval.target_speaker", T::text, "", {}, "defaults to the only speaker of the target corpus"},
      {"eval.genders", T::text, "", {}, "speaker:M|F pairs, comma-separated"},
      {"eval.settings", T::text, "one-to-one", {}, "report columns"},
      {"eval.default_setting", T::choice, "one-to-one", {"one-to-one", "many-to-one", "many-unseen-to-one"}, ""},
      {"eval.source_settings", T::text, "", {}, "speaker:setting pairs, comma-separated"},
      {"toy.clips_per_speaker", T::integer, "50", {}, ""},
      {"toy.clip_duration_s", T::real, "2", {}, ""},
  };
  return keys;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, p) : std::to_string(v);
}

Config::Config() {
  for (const auto& k : schema()) values_[k.key] = canonical(k, k.default_value);
}

void Config::set(const std::string& key, const std::string& value) {
  const KeyInfo* k = find_key(key);
  if (!k) throw UsageError("unknown config key '" + key + "'");
  values_[key] = canonical(*k, value);
}

void Config::apply_override(const std::string& assignment) {
  const auto [k, v] = split_assignment(assignment);
  set(k, v);
}

void Config::load_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot read config file " + file.string());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    try {
      apply_override(line);
    } catch (const UsageError& e) {
      throw UsageError(file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

long Config::get_int(const std::string& key) const { return *parse_long(get(key)); }
double Config::get_double(const std::string& key) const { return *parse_double(get(key)); }
bool Config::get_bool(const std::string& key) const { return get(key) == "true"; }

std::string Config::snapshot() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

Config resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  Config c;
  if (file) {
    c.load_file(*file);
  } else if (const char* env = std::getenv("CVC_CONFIG"); env && *env) {
    c.load_file(env);
  }
  for (const auto& o : overrides) c.apply_override(o);
  return c;
}

audio::MelConfig mel_config(const Config& c) {
  audio::MelConfig m;
  m.sample_rate_hz = static_cast<int>(c.get_int("frontend.sample_rate_hz"));
  m.n_fft = static_cast<int>(c.get_int("frontend.n_fft"));
  m.frame_length_ms = static_cast<int>(c.get_int("frontend.frame_length_ms"));
  m.frame_shift_ms = static_cast<int>(c.get_int("frontend.frame_shift_ms"));
  m.n_mels = static_cast<int>(c.get_int("frontend.n_mels"));
  m.fmin_hz = c.get_double("frontend.fmin_hz");
  m.fmax_hz = c.get_double("frontend.fmax_hz");
  m.amplitude_floor = c.get_double("frontend.amplitude_floor");
  return m;
}

audio::VadConfig vad_config(const Config& c) {
  return {c.get_double("frontend.vad_threshold_db"), static_cast<int>(c.get_int("frontend.vad_min_run_frames")),
          c.get_double("frontend.amplitude_floor")};
}

audio::BuildOptions build_options(const Config& c) {
  return {mel_config(c), vad_config(c), c.get_double("frontend.min_duration_s")};
}

audio::CropSpec crop_spec(const Config& c) {
  return {c.get_double("train.crop_duration_s"),
          c.get("train.crop_policy") == "reject_short" ? audio::CropPolicy::reject_short : audio::CropPolicy::random_crop};
}

train::ModelConfig model_config(const Config& c) {
  train::ModelConfig m;
  m.generator.base_channels = static_cast<int>(c.get_int("model.base_channels"));
  m.generator.n_resnet_blocks = static_cast<int>(c.get_int("model.n_resnet_blocks"));
  m.generator.n_downsample = static_cast<int>(c.get_int("model.n_downsample"));
  m.generator.norm = parse_norm(c.get("model.norm"));
  m.generator.residual_output = c.get_bool("model.residual_output");
  m.discriminator.n_layers = static_cast<int>(c.get_int("model.disc_layers"));
  m.discriminator.base_channels = static_cast<int>(c.get_int("model.disc_base_channels"));
  m.discriminator.norm = parse_norm(c.get("model.disc_norm"));
  m.projection.selected_layers = parse_int_list(c, "model.nce_layers");
  m.projection.patches_per_layer = static_cast<int>(c.get_int("model.patches_per_layer"));
  m.projection.embed_dim = static_cast<int>(c.get_int("model.embed_dim"));
  m.projection.temperature = c.get_double("model.temperature");
  m.projection.mean_reduce = c.get_bool("model.nce_mean_reduce");
  return m;
}

train::TrainConfig train_config(const Config& c) {
  train::TrainConfig t;
  t.epochs = static_cast<int>(c.get_int("train.epochs"));
  t.batch_size = static_cast<int>(c.get_int("train.batch_size"));
  t.lr = c.get_double("train.lr");
  t.adam_beta1 = c.get_double("train.adam_beta1");
  t.adam_beta2 = c.get_double("train.adam_beta2");
  t.seed = static_cast<std::uint64_t>(c.get_int("run.seed"));
  t.weights.lambda_nce = c.get_double("train.lambda_nce");
  t.weights.mu_identity = c.get_double("train.mu_identity");
  t.gan_variant = losses::parse_gan_variant(c.get("train.gan_variant"));
  t.checkpoint_every_epochs = static_cast<int>(c.get_int("train.checkpoint_every_epochs"));
  t.lr_schedule = c.get("train.lr_schedule") == "constant" ? train::LrSchedule::constant
                                                           : train::LrSchedule::linear_decay_after_half;
  return t;
}

convert::VocoderHandle vocoder_handle(const Config& c) {
  convert::VocoderHandle h;
  h.kind = convert::parse_vocoder_kind(c.get("convert.vocoder"));
  h.endpoint = c.get("convert.vocoder_endpoint");
  h.expected_mel_config = mel_config(c);
  h.griffin_lim_iterations = static_cast<int>(c.get_int("convert.griffin_lim_iterations"));
  return h;
}

eval::PairingSpec pairing_spec(const Config& c) {
  eval::PairingSpec p;
  p.target_speaker = c.get("eval.target_speaker");
  for (const auto& item : split(c.get("eval.genders"), ',')) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) throw UsageError("config key 'eval.genders': expected speaker:M|F, got '" + item + "'");
    p.gender[trim(item.substr(0, colon))] = eval::parse_gender(trim(item.substr(colon + 1)));
  }
  p.settings.clear();
  for (const auto& s : split(c.get("eval.settings"), ',')) p.settings.push_back(eval::parse_setting(s));
  if (p.settings.empty()) throw UsageError("config key 'eval.settings': at least one setting required");
  p.default_setting = eval::parse_setting(c.get("eval.default_setting"));
  for (const auto& item : split(c.get("eval.source_settings"), ',')) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos)
      throw UsageError("config key 'eval.source_settings': expected speaker:setting, got '" + item + "'");
    p.setting_of_source[trim(item.substr(0, colon))] = eval::parse_setting(trim(item.substr(colon + 1)));
  }
  return p;
}

}  // namespace cvc::cli
