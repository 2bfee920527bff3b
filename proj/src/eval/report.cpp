#include "cvc/eval/report.hpp"

#include "cvc/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cvc::eval {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& kind, const std::string& detail) { throw Error("evaluation", kind, detail); }

std::size_t row_of(GenderPair p) { return static_cast<std::size_t>(p); }

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' '); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Gender parse_gender(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "m" || l == "male") return Gender::male;
  if (l == "f" || l == "female") return Gender::female;
  throw UsageError("unknown gender '" + s + "'");
}

Setting parse_setting(const std::string& s) {
  if (s == "one-to-one") return Setting::one_to_one;
  if (s == "many-to-one") return Setting::many_to_one;
  if (s == "many-unseen-to-one") return Setting::many_unseen_to_one;
  throw UsageError("unknown setting '" + s + "'");
}

GenderPair gender_pair(Gender source, Gender target) {
  if (source == Gender::male) return target == Gender::male ? GenderPair::male_male : GenderPair::male_female;
  return target == Gender::female ? GenderPair::female_female : GenderPair::female_male;
}

std::string label(GenderPair p) {
  switch (p) {
    case GenderPair::male_male: return "Male-Male";
    case GenderPair::male_female: return "Male-Female";
    case GenderPair::female_female: return "Female-Female";
    case GenderPair::female_male: return "Female-Male";
  }
  return {};
}

std::string label(Setting s) {
  switch (s) {
    case Setting::one_to_one: return "one-to-one";
    case Setting::many_to_one: return "many-to-one";
    case Setting::many_unseen_to_one: return "many-unseen-to-one";
  }
  return {};
}

const ReportCell& SimilarityReport::cell(GenderPair row, Setting setting, const std::string& system) const {
  const auto s = std::find(settings.begin(), settings.end(), setting);
  const auto y = std::find(systems.begin(), systems.end(), system);
  if (s == settings.end() || y == systems.end()) fail("UnknownSetting", label(setting) + "/" + system);
  return cells[row_of(row)][static_cast<std::size_t>(s - settings.begin()) * systems.size() +
                            static_cast<std::size_t>(y - systems.begin())];
}

std::vector<std::pair<Setting, std::string>> SimilarityReport::columns() const {
  std::vector<std::pair<Setting, std::string>> out;
  for (std::size_t si = 0; si < settings.size(); ++si)
    for (std::size_t yi = 0; yi < systems.size(); ++yi) {
      bool used = yi == 0;
      for (std::size_t r = 0; r < 4 && !used; ++r) used = cells[r][si * systems.size() + yi].pairs > 0;
      if (used) out.emplace_back(settings[si], systems[yi]);
    }
  return out;
}

SimilarityReport aggregate(std::vector<PairScore> scores, std::vector<Setting> settings,
                           std::vector<std::string> systems, std::string embedder) {
  SimilarityReport r;
  r.settings = std::move(settings);
  r.systems = std::move(systems);
  r.embedder = std::move(embedder);
  const std::size_t cols = r.settings.size() * r.systems.size();
  std::array<std::vector<double>, 4> sums;
  for (std::size_t i = 0; i < 4; ++i) {
    r.cells[i].assign(cols, {});
    sums[i].assign(cols, 0.0);
  }
  for (const auto& s : scores) {
    const auto si = std::find(r.settings.begin(), r.settings.end(), s.setting);
    const auto yi = std::find(r.systems.begin(), r.systems.end(), s.system);
    if (si == r.settings.end() || yi == r.systems.end())
      fail("UnknownSetting", s.utterance_id + " scored under " + label(s.setting) + "/" + s.system);
    const std::size_t c = static_cast<std::size_t>(si - r.settings.begin()) * r.systems.size() +
                          static_cast<std::size_t>(yi - r.systems.begin());
    sums[row_of(s.pair)][c] += s.similarity;
    ++r.cells[row_of(s.pair)][c].pairs;
  }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < cols; ++c)
      if (r.cells[i][c].pairs > 0) r.cells[i][c].mean = sums[i][c] / static_cast<double>(r.cells[i][c].pairs);
  r.scores = std::move(scores);
  return r;
}

json SimilarityReport::to_json() const {
  json j;
  j["embedder"] = embedder;
  j["settings"] = json::array();
  for (auto s : settings) j["settings"].push_back(label(s));
  j["systems"] = systems;
  j["rows"] = json::array();
  for (auto row : kGenderRows) {
    json cols = json::object();
    for (const auto& [setting, system] : columns()) {
      const auto& c = cell(row, setting, system);
      cols[label(setting)][system] = {{"mean", optional_json(c.mean)}, {"pairs", c.pairs}};
    }
    j["rows"].push_back({{"gender", label(row)}, {"cells", cols}});
  }
  j["scores"] = json::array();
  for (const auto& s : scores)
    j["scores"].push_back({{"utterance_id", s.utterance_id},
                           {"source_speaker", s.source_speaker},
                           {"target_speaker", s.target_speaker},
                           {"gender", label(s.pair)},
                           {"setting", label(s.setting)},
                           {"system", s.system},
                           {"similarity", s.similarity}});
  return j;
}

std::string SimilarityReport::to_text() const {
  constexpr std::size_t kRowW = 15, kColW = 14;
  std::ostringstream out;
  const auto cols = columns();
  out << pad("Gender", kRowW);
  for (auto s : settings) {
    const auto span = std::count_if(cols.begin(), cols.end(), [&](const auto& c) { return c.first == s; });
    out << pad(label(s), kColW * static_cast<std::size_t>(span));
  }
  out << '\n' << pad("", kRowW);
  for (const auto& c : cols) out << pad(c.second, kColW);
  out << '\n';
  for (auto row : kGenderRows) {
    out << pad(label(row), kRowW);
    for (const auto& [setting, system] : cols) {
      const auto& c = cell(row, setting, system);
      out << pad(c.mean ? fixed3(std::clamp(*c.mean, 0.0, 1.0)) + " (" + std::to_string(c.pairs) + ")" : "-", kColW);
    }
    out << '\n';
  }
  if (!embedder.empty()) out << "embedder: " << embedder << '\n';
  return out.str();
}

SimilarityReport build_report(const convert::Manifest& converted, const audio::CorpusIndex& target_index,
                              const PairingSpec& spec, const Embedder& embedder) {
  const auto gender_of = [&](const std::string& speaker) {
    const auto it = spec.gender.find(speaker);
    if (it == spec.gender.end()) fail("MissingReference", "no gender recorded for speaker " + speaker);
    return it->second;
  };
  std::vector<SpeakerEmbedding> refs;
  for (const auto& e : target_index.entries)
    if (e.speaker_id == spec.target_speaker && !e.wav.empty()) refs.push_back(embedder.embed_file(e.wav, e.utterance_id));
  if (refs.empty()) fail("MissingReference", "no reference audio for target speaker " + spec.target_speaker);
  const auto reference = mean_embedding(refs, spec.target_speaker);
  const Gender target_gender = gender_of(spec.target_speaker);

  std::vector<PairScore> scores;
  for (const auto& item : converted.items) {
    PairScore s;
    s.utterance_id = item.utterance_id;
    s.source_speaker = item.speaker_id;
    s.target_speaker = spec.target_speaker;
    s.pair = gender_pair(gender_of(item.speaker_id), target_gender);
    const auto st = spec.setting_of_source.find(item.speaker_id);
    s.setting = st == spec.setting_of_source.end() ? spec.default_setting : st->second;
    s.system = spec.system;
    s.similarity = cosine_similarity(embedder.embed_file(item.output_path, item.utterance_id), reference);
    scores.push_back(std::move(s));
  }
  return aggregate(std::move(scores), spec.settings, {spec.system}, embedder.identity());
}

void write_report(const SimilarityReport& report, const std::filesystem::path& json_file,
                  const std::filesystem::path& text_file) {
  std::ofstream j(json_file), t(text_file);
  if (!j || !t) fail("UnwritableOutput", json_file.string());
  j << report.to_json().dump(2) << '\n';
  t << report.to_text();
}

AblationReport ablation_scaffold() {
  AblationReport r;
  for (std::size_t i = 0; i < 4; ++i) r.rows[i].pair = kGenderRows[i];
  return r;
}

AblationReport ablation_report(const SimilarityReport& with_identity, const SimilarityReport& without_identity) {
  const auto pooled = [](const SimilarityReport& rep, GenderPair p) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : rep.scores)
      if (s.pair == p) {
        sum += s.similarity;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  auto r = ablation_scaffold();
  for (auto& row : r.rows) {
    row.with_identity = pooled(with_identity, row.pair);
    row.without_identity = pooled(without_identity, row.pair);
    if (row.with_identity && row.without_identity && *row.without_identity != 0.0)
      row.relative_improvement = (*row.with_identity - *row.without_identity) / *row.without_identity;
  }
  return r;
}

json AblationReport::to_json() const {
  json j;
  j["columns"] = {"CVC", "CVC (w/o idt)", "ΔImp."};
  j["rows"] = json::array();
  for (const auto& row : rows)
    j["rows"].push_back({{"gender", label(row.pair)},
                         {"CVC", optional_json(row.with_identity)},
                         {"CVC (w/o idt)", optional_json(row.without_identity)},
                         {"ΔImp.", optional_json(row.relative_improvement)}});
  return j;
}

std::string AblationReport::to_text() const {
  constexpr std::size_t kRowW = 15, kColW = 15;
  std::ostringstream out;
  out << pad("Gender", kRowW) << pad("CVC", kColW) << pad("CVC (w/o idt)", kColW) << "ΔImp.\n";
  for (const auto& row : rows) {
    out << pad(label(row.pair), kRowW);
    out << pad(row.with_identity ? fixed3(std::clamp(*row.with_identity, 0.0, 1.0)) : "-", kColW);
    out << pad(row.without_identity ? fixed3(std::clamp(*row.without_identity, 0.0, 1.0)) : "-", kColW);
    if (row.relative_improvement) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * *row.relative_improvement);
      out << buf;
    } else {
      out << "-";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace cvc::eval
