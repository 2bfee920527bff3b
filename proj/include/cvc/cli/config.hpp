#pragma once

#include "cvc/audio/corpus.hpp"
#include "cvc/convert/vocoder.hpp"
#include "cvc/eval/report.hpp"
#include "cvc/train/trainer.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cvc::cli {

enum class ValueType { integer, real, boolean, text, choice };

struct KeyInfo {
  std::string key;
  ValueType type;
  std::string default_value;
  std::vector<std::string> choices;
  std::string help;
};

/// Every accepted key, namespaced by module prefix.
const std::vector<KeyInfo>& schema();

/// Flat key = value configuration shared by all subcommands. Values are
/// validated and canonicalized on every set, so equal settings print equally.
class Config {
 public:
  Config();

  /// Throws UsageError naming the key when it is unknown or the value does not parse.
  void set(const std::string& key, const std::string& value);
  /// `key=value`; throws UsageError.
  void apply_override(const std::string& assignment);
  /// Lines of `key = value`; blank lines and `#` comments ignored.
  void load_file(const std::filesystem::path& file);

  const std::string& get(const std::string& key) const;
  long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Sorted `key = value` lines; loading it back reproduces this config.
  std::string snapshot() const;

 private:
  std::map<std::string, std::string> values_;
};

/// defaults < file (explicit path, else $CVC_CONFIG when set) < overrides.
Config resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

/// Canonical text for a double: shortest form that round-trips.
std::string format_double(double v);

audio::MelConfig mel_config(const Config& c);
audio::VadConfig vad_config(const Config& c);
audio::BuildOptions build_options(const Config& c);
audio::CropSpec crop_spec(const Config& c);
train::ModelConfig model_config(const Config& c);
train::TrainConfig train_config(const Config& c);
convert::VocoderHandle vocoder_handle(const Config& c);
/// eval.genders "spk:M,spk2:F"; eval.source_settings "spk:many-to-one,...".
eval::PairingSpec pairing_spec(const Config& c);

}  // namespace cvc::cli
