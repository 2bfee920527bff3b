#include "cvc/eval/embedding.hpp"

#include "cvc/audio/resample.hpp"
#include "cvc/audio/wav_io.hpp"
#include "cvc/error.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cvc::eval {
namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& detail) { throw Error("evaluation", kind, detail); }

void standardize(std::span<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (double& x : v) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
}

void unit_normalize(std::vector<double>& v, const std::string& id) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (!(n > 0.0) || !std::isfinite(n)) fail("DegenerateEmbedding", "zero or non-finite embedding for " + id);
  for (double& x : v) x /= n;
}

}  // namespace

SpeakerEmbedding Embedder::embed_file(const std::filesystem::path& wav, const std::string& utterance_id) const {
  return embed(audio::load_and_resample(wav), utterance_id);
}

SpeakerEmbedding FallbackEmbedder::embed(const audio::Waveform& utterance, const std::string& utterance_id) const {
  audio::Waveform w = utterance;
  if (w.sample_rate_hz != audio::kTargetSampleRate) {
    w.samples = audio::resample(w.samples, w.sample_rate_hz, audio::kTargetSampleRate);
    w.sample_rate_hz = audio::kTargetSampleRate;
  }
  if (w.duration_s() < kMinDurationS) fail("TooShort", utterance_id + " is shorter than " + std::to_string(kMinDurationS) + " s");
  const auto mel = audio::extract_logmel(w);
  const int n_mels = mel.n_mels();
  const int frames = mel.frames();

  // Pool mel bins into bands: band(b) = floor(b * kBands / n_mels).
  RowMatrix<double> bands = RowMatrix<double>::Zero(kBands, frames);
  std::vector<int> count(kBands, 0);
  for (int b = 0; b < n_mels; ++b) {
    const int k = b * kBands / n_mels;
    bands.row(k) += mel.values.row(b).cast<double>();
    ++count[k];
  }
  for (int k = 0; k < kBands; ++k) bands.row(k) /= count[k];

  SpeakerEmbedding e;
  e.source_utterance_id = utterance_id;
  e.vector.assign(kDim, 0.0);
  for (int k = 0; k < kBands; ++k) {
    e.vector[k] = bands.row(k).mean();
    double s = 0.0, s2 = 0.0;
    for (int t = 1; t < frames; ++t) {
      const double d = bands(k, t) - bands(k, t - 1);
      s += d;
      s2 += d * d;
    }
    const double n = std::max(1, frames - 1);
    e.vector[kBands + k] = std::sqrt(std::max(0.0, s2 / n - (s / n) * (s / n)));
  }
  standardize({e.vector.data(), kBands});
  standardize({e.vector.data() + kBands, kBands});
  unit_normalize(e.vector, utterance_id);
  return e;
}

SpeakerEmbedding ExternalEmbedder::embed(const audio::Waveform& utterance, const std::string& utterance_id) const {
  static std::atomic<unsigned> counter{0};
  const auto tmp = std::filesystem::temp_directory_path() /
                   ("cvc_embed_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".wav");
  audio::write_wav(tmp, utterance.samples, utterance.sample_rate_hz);
  try {
    auto e = embed_file(tmp, utterance_id);
    std::filesystem::remove(tmp);
    return e;
  } catch (...) {
    std::filesystem::remove(tmp);
    throw;
  }
}

SpeakerEmbedding ExternalEmbedder::embed_file(const std::filesystem::path& wav, const std::string& utterance_id) const {
  const std::string cmd = command_ + " '" + wav.string() + "'";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) fail("EmbedderUnavailable", "cannot run " + command_);
  std::string text;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) text.append(buf, n);
  const int rc = ::pclose(pipe);
  if (rc != 0) fail("EmbedderUnavailable", command_ + " exited with status " + std::to_string(rc));
  SpeakerEmbedding e;
  e.source_utterance_id = utterance_id;
  std::istringstream in(text);
  for (double x; in >> x;) e.vector.push_back(x);
  if (e.vector.empty()) fail("EmbedderUnavailable", command_ + " produced no values");
  unit_normalize(e.vector, utterance_id);
  return e;
}

std::unique_ptr<Embedder> make_embedder(const std::string& spec) {
  if (spec == "fallback") return std::make_unique<FallbackEmbedder>();
  constexpr std::string_view prefix = "external:";
  if (spec.starts_with(prefix) && spec.size() > prefix.size())
    return std::make_unique<ExternalEmbedder>(spec.substr(prefix.size()));
  fail("EmbedderUnavailable", "unknown embedder '" + spec + "'");
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.vector.size() != b.vector.size())
    fail("DimensionMismatch", std::to_string(a.vector.size()) + " vs " + std::to_string(b.vector.size()));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.vector.size(); ++i) dot += a.vector[i] * b.vector[i];
  return std::clamp(dot, -1.0, 1.0);
}

SpeakerEmbedding mean_embedding(const std::vector<SpeakerEmbedding>& embeddings, const std::string& id) {
  if (embeddings.empty()) fail("MissingReference", "no reference embeddings for " + id);
  SpeakerEmbedding m;
  m.source_utterance_id = id;
  m.vector.assign(embeddings.front().vector.size(), 0.0);
  for (const auto& e : embeddings) {
    if (e.vector.size() != m.vector.size()) fail("DimensionMismatch", "reference embeddings differ in size");
    for (std::size_t i = 0; i < e.vector.size(); ++i) m.vector[i] += e.vector[i];
  }
  unit_normalize(m.vector, id);
  return m;
}

}  // namespace cvc::eval
