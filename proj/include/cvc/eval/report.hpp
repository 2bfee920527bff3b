#pragma once

#include "cvc/audio/corpus.hpp"
#include "cvc/convert/pipeline.hpp"
#include "cvc/eval/embedding.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cvc::eval {

enum class Gender { male, female };
enum class GenderPair { male_male, male_female, female_female, female_male };
enum class Setting { one_to_one, many_to_one, many_unseen_to_one };

inline constexpr std::array<GenderPair, 4> kGenderRows = {GenderPair::male_male, GenderPair::male_female,
                                                          GenderPair::female_female, GenderPair::female_male};

Gender parse_gender(const std::string& s);
Setting parse_setting(const std::string& s);
GenderPair gender_pair(Gender source, Gender target);
std::string label(GenderPair p);
std::string label(Setting s);

struct PairScore {
  std::string utterance_id;
  std::string source_speaker;
  std::string target_speaker;
  GenderPair pair = GenderPair::male_male;
  Setting setting = Setting::one_to_one;
  std::string system = "CVC";
  double similarity = 0.0;  // raw cosine, may be negative
};

struct ReportCell {
  std::optional<double> mean;
  std::size_t pairs = 0;
};

/// Gender-pair rows x (setting, system) columns.
struct SimilarityReport {
  std::vector<Setting> settings;
  std::vector<std::string> systems;
  std::string embedder;
  std::vector<PairScore> scores;
  std::array<std::vector<ReportCell>, 4> cells;  // [row][setting * systems + system]

  const ReportCell& cell(GenderPair row, Setting setting, const std::string& system = "CVC") const;
  /// Displayed (setting, system) columns: the first system always, other
  /// systems only where they have at least one score in that setting.
  std::vector<std::pair<Setting, std::string>> columns() const;
  nlohmann::json to_json() const;
  /// Fixed-width table; means clamped to [0, 1], empty cells shown as "-".
  std::string to_text() const;
};

/// Cell means over the raw scores. Scores whose setting or system is not listed
/// throw evaluation.UnknownSetting.
SimilarityReport aggregate(std::vector<PairScore> scores, std::vector<Setting> settings,
                           std::vector<std::string> systems = {"CVC"}, std::string embedder = {});

struct PairingSpec {
  std::string target_speaker;
  std::map<std::string, Gender> gender;
  std::vector<Setting> settings = {Setting::one_to_one};
  Setting default_setting = Setting::one_to_one;
  std::map<std::string, Setting> setting_of_source;
  std::string system = "CVC";
};

/// Scores every converted item against the mean target-speaker embedding taken
/// over target_index entries of spec.target_speaker. Throws evaluation.MissingReference.
SimilarityReport build_report(const convert::Manifest& converted, const audio::CorpusIndex& target_index,
                              const PairingSpec& spec, const Embedder& embedder);

void write_report(const SimilarityReport& report, const std::filesystem::path& json_file,
                  const std::filesystem::path& text_file);

/// Identity-loss ablation table: CVC, CVC (w/o idt) and relative improvement
/// (with - without) / without, per gender row, pooled over settings.
struct AblationRow {
  GenderPair pair;
  std::optional<double> with_identity;
  std::optional<double> without_identity;
  std::optional<double> relative_improvement;
};

struct AblationReport {
  std::array<AblationRow, 4> rows;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

AblationReport ablation_report(const SimilarityReport& with_identity, const SimilarityReport& without_identity);
/// Layout with every value empty, emitted before any evaluation has run.
AblationReport ablation_scaffold();

}  // namespace cvc::eval
