#include "cvc/audio/corpus.hpp"

#include "cvc/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace cvc::audio {
namespace {

using nlohmann::json;

void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("audio_frontend", "UnreadableFile", file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("audio_frontend", "UnreadableFile", file.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  out << j.dump(2) << "\n";
  if (!out) throw Error("audio_frontend", "UnwritableFile", file.string());
}

}  // namespace

void write_features(const std::filesystem::path& path, const MelSpectrogram& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("audio_frontend", "UnwritableFile", path.string());
  os.write("CVCF", 4);
  put_u32(os, kFeatureFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(m.n_mels()));
  put_u32(os, static_cast<std::uint32_t>(m.frames()));
  for (int r = 0; r < m.n_mels(); ++r)
    for (int t = 0; t < m.frames(); ++t) {
      float v = m.values(r, t);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(os, bits);
    }
  if (!os) throw Error("audio_frontend", "UnwritableFile", path.string());
}

MelSpectrogram read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("audio_frontend", "UnreadableFile", path.string());
  unsigned char header[16];
  if (!in.read(reinterpret_cast<char*>(header), 16) || std::memcmp(header, "CVCF", 4) != 0)
    throw Error("audio_frontend", "UnreadableFile", path.string() + ": bad CVCF header");
  const auto version = get_u32(header + 4);
  const auto n_mels = get_u32(header + 8);
  const auto frames = get_u32(header + 12);
  if (version != kFeatureFormatVersion)
    throw Error("audio_frontend", "UnreadableFile", path.string() + ": unsupported version " + std::to_string(version));
  std::vector<unsigned char> body(static_cast<std::size_t>(n_mels) * frames * 4);
  if (!in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size())))
    throw Error("audio_frontend", "UnreadableFile", path.string() + ": truncated payload");
  MelSpectrogram m;
  m.values.resize(n_mels, frames);
  for (std::uint32_t r = 0; r < n_mels; ++r)
    for (std::uint32_t t = 0; t < frames; ++t) {
      const std::uint32_t bits = get_u32(body.data() + (static_cast<std::size_t>(r) * frames + t) * 4);
      float v;
      std::memcpy(&v, &bits, 4);
      m.values(r, t) = v;
    }
  return m;
}

std::vector<std::string> CorpusIndex::speakers() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.speaker_id);
  return {s.begin(), s.end()};
}

void write_index(const CorpusIndex& index, const std::filesystem::path& file) {
  json arr = json::array();
  const auto base = file.parent_path();
  for (const auto& e : index.entries) {
    const auto rel = e.path.is_absolute() ? std::filesystem::relative(e.path, base) : e.path;
    arr.push_back({{"utterance_id", e.utterance_id},
                   {"speaker_id", e.speaker_id},
                   {"path", rel.generic_string()},
                   {"T", e.frames},
                   {"wav", e.wav.string()}});
  }
  write_json(arr, file);
}

CorpusIndex read_index(const std::filesystem::path& file) {
  const json arr = read_json(file);
  if (!arr.is_array()) throw Error("audio_frontend", "UnreadableFile", file.string() + ": index must be an array");
  CorpusIndex index;
  index.root = file.parent_path();
  try {
    for (const auto& j : arr) {
      CorpusEntry e;
      e.utterance_id = j.at("utterance_id").get<std::string>();
      e.speaker_id = j.at("speaker_id").get<std::string>();
      e.path = index.root / j.at("path").get<std::string>();
      e.frames = j.at("T").get<int>();
      if (j.contains("wav")) e.wav = j.at("wav").get<std::string>();
      index.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error("audio_frontend", "UnreadableFile", file.string() + ": " + ex.what());
  }
  return index;
}

MelSpectrogram NormStats::normalize(const MelSpectrogram& m) const {
  MelSpectrogram out = m;
  for (int r = 0; r < m.n_mels(); ++r)
    for (int t = 0; t < m.frames(); ++t)
      out.values(r, t) = static_cast<float>((m.values(r, t) - mean[r]) / std[r]);
  return out;
}

MelSpectrogram NormStats::denormalize(const MelSpectrogram& m) const {
  MelSpectrogram out = m;
  for (int r = 0; r < m.n_mels(); ++r)
    for (int t = 0; t < m.frames(); ++t)
      out.values(r, t) = static_cast<float>(m.values(r, t) * std[r] + mean[r]);
  return out;
}

NormStats compute_norm_stats(const std::vector<MelSpectrogram>& utterances) {
  NormStats s;
  if (utterances.empty()) return s;
  const int bins = utterances.front().n_mels();
  std::vector<double> sum(bins, 0.0), sq(bins, 0.0);
  for (const auto& m : utterances)
    for (int r = 0; r < bins; ++r)
      for (int t = 0; t < m.frames(); ++t) {
        const double v = m.values(r, t);
        sum[r] += v;
        sq[r] += v * v;
      }
  for (const auto& m : utterances) s.frames += m.frames();
  s.mean.resize(bins);
  s.std.resize(bins);
  for (int r = 0; r < bins; ++r) {
    s.mean[r] = sum[r] / static_cast<double>(s.frames);
    const double var = std::max(0.0, sq[r] / static_cast<double>(s.frames) - s.mean[r] * s.mean[r]);
    s.std[r] = std::max(std::sqrt(var), 1e-5);
  }
  return s;
}

json to_json(const NormStats& stats) {
  return {{"n_mels", stats.mean.size()}, {"frames", stats.frames}, {"mean", stats.mean}, {"std", stats.std}};
}

NormStats norm_stats_from_json(const json& j) {
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  s.frames = j.at("frames").get<long>();
  if (s.mean.size() != s.std.size()) throw json::other_error::create(501, "mean/std length differ", &j);
  return s;
}

json to_json(const MelConfig& m) {
  return {{"sample_rate_hz", m.sample_rate_hz}, {"n_fft", m.n_fft}, {"frame_length_ms", m.frame_length_ms},
          {"frame_shift_ms", m.frame_shift_ms}, {"n_mels", m.n_mels}, {"fmin_hz", m.fmin_hz},
          {"fmax_hz", m.fmax_hz}, {"amplitude_floor", m.amplitude_floor}};
}

MelConfig mel_config_from_json(const json& j) {
  MelConfig m;
  m.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  m.n_fft = j.at("n_fft").get<int>();
  m.frame_length_ms = j.at("frame_length_ms").get<int>();
  m.frame_shift_ms = j.at("frame_shift_ms").get<int>();
  m.n_mels = j.at("n_mels").get<int>();
  m.fmin_hz = j.at("fmin_hz").get<double>();
  m.fmax_hz = j.at("fmax_hz").get<double>();
  m.amplitude_floor = j.at("amplitude_floor").get<double>();
  return m;
}

void write_norm_stats(const NormStats& stats, const std::filesystem::path& file) { write_json(to_json(stats), file); }

NormStats read_norm_stats(const std::filesystem::path& file) {
  const json j = read_json(file);
  try {
    return norm_stats_from_json(j);
  } catch (const json::exception& ex) {
    throw Error("audio_frontend", "UnreadableFile", file.string() + ": " + ex.what());
  }
}

BuildReport build_corpus(const std::vector<WavSource>& sources, const std::filesystem::path& out_dir,
                         const BuildOptions& options) {
  BuildReport report;
  report.index.root = out_dir;
  std::vector<MelSpectrogram> kept;
  const int min_frames = frames_for_duration(options.min_duration_s, options.mel);
  std::set<std::string> ids;

  for (const auto& src : sources) {
    try {
      const Waveform w = load_and_resample(src.wav, options.mel.sample_rate_hz);
      const MelSpectrogram voiced = apply_vad(extract_logmel(w, options.mel), options.vad);
      if (voiced.frames() < min_frames) {
        report.skipped.emplace_back(src.wav.string(), "shorter than " + std::to_string(min_frames) + " frames after VAD");
        continue;
      }
      std::string id = src.speaker_id + "_" + src.wav.stem().string();
      while (!ids.insert(id).second) id += "_dup";
      const auto feature_path = out_dir / "features" / (id + ".cvcf");
      write_features(feature_path, voiced);
      report.index.entries.push_back({id, src.speaker_id, feature_path, voiced.frames(), std::filesystem::absolute(src.wav)});
      kept.push_back(voiced);
    } catch (const Error& e) {
      report.skipped.emplace_back(src.wav.string(), e.what());
    }
  }

  report.stats = compute_norm_stats(kept);
  write_index(report.index, out_dir / "index.json");
  if (!kept.empty()) write_norm_stats(report.stats, out_dir / "norm_stats.json");
  return report;
}

CorpusIndex load_corpus(const std::filesystem::path& dir) { return read_index(dir / "index.json"); }

NormStats load_corpus_stats(const std::filesystem::path& dir) { return read_norm_stats(dir / "norm_stats.json"); }

std::vector<WavSource> discover_wavs(const std::filesystem::path& dir, const std::string& speaker_override) {
  std::vector<WavSource> out;
  if (!std::filesystem::is_directory(dir)) throw Error("audio_frontend", "UnreadableFile", dir.string() + ": not a directory");
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext != ".wav") continue;
    const std::string speaker =
        speaker_override.empty() ? entry.path().parent_path().filename().string() : speaker_override;
    out.push_back({entry.path(), speaker});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.wav < b.wav; });
  return out;
}

}  // namespace cvc::audio
