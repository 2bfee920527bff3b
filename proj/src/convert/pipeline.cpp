#include "cvc/convert/pipeline.hpp"

#include "cvc/audio/wav_io.hpp"
#include "cvc/error.hpp"
#include "cvc/model/checkpoint.hpp"

#include <atomic>
#include <fstream>
#include <optional>
#include <thread>

namespace cvc::convert {

using nlohmann::json;

ConversionModel ConversionModel::load(const std::filesystem::path& checkpoint) {
  const auto archive = model::read_archive(checkpoint);
  try {
    const auto& m = archive.metadata;
    return ConversionModel{model::load_generator(archive), audio::norm_stats_from_json(m.at("source_stats")),
                           audio::norm_stats_from_json(m.at("target_stats")), audio::mel_config_from_json(m.at("mel"))};
  } catch (const json::exception& e) {
    throw Error("model_core", "CorruptCheckpoint", checkpoint.string() + ": " + e.what());
  }
}

audio::MelSpectrogram convert_mel(const ConversionModel& model, const audio::MelSpectrogram& source) {
  const auto normalized = model.source_stats.normalize(source);
  const int frames = normalized.frames();
  const int stride = model.generator.config().stride_product();
  const int padded = (frames + stride - 1) / stride * stride;

  Tensor<float> x(1, normalized.n_mels(), padded);
  for (int r = 0; r < normalized.n_mels(); ++r)
    for (int c = 0; c < padded; ++c) x.at(0, r, c) = normalized.values(r, std::min(c, frames - 1));

  const auto y = model.generator.forward(x);
  audio::MelSpectrogram out = audio::from_tensor(y);
  out.values = out.values.leftCols(frames).eval();
  out.frame_shift_ms = source.frame_shift_ms;
  out.frame_length_ms = source.frame_length_ms;
  return model.target_stats.denormalize(out);
}

audio::Waveform convert(const audio::Waveform& utterance, const ConversionModel& model, const VocoderHandle& vocoder) {
  check_mel_config(vocoder, model.mel);
  const auto mel = audio::extract_logmel(utterance, model.mel);
  return vocode(convert_mel(model, mel), vocoder, model.mel);
}

json Manifest::to_json() const {
  json j = {{"items", json::array()}, {"failures", json::array()}};
  for (const auto& it : items)
    j["items"].push_back({{"utterance_id", it.utterance_id},
                          {"speaker_id", it.speaker_id},
                          {"source_path", it.source_path.string()},
                          {"output_path", it.output_path.string()},
                          {"duration_s", it.duration_s}});
  for (const auto& f : failures)
    j["failures"].push_back(
        {{"utterance_id", f.utterance_id}, {"source_path", f.source_path.string()}, {"error", f.error}});
  return j;
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  for (const auto& it : j.at("items"))
    m.items.push_back({it.at("utterance_id").get<std::string>(), it.value("speaker_id", std::string()),
                       it.at("source_path").get<std::string>(), it.at("output_path").get<std::string>(),
                       it.at("duration_s").get<double>()});
  for (const auto& f : j.at("failures"))
    m.failures.push_back({f.at("utterance_id").get<std::string>(), f.at("source_path").get<std::string>(),
                          f.at("error").get<std::string>()});
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("conversion_pipeline", "UnwritableOutput", file.string());
  out << manifest.to_json().dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("conversion_pipeline", "UnreadableManifest", file.string());
  try {
    return Manifest::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("conversion_pipeline", "UnreadableManifest", file.string() + ": " + e.what());
  }
}

Manifest batch_convert(const audio::CorpusIndex& index, const ConversionModel& model, const VocoderHandle& vocoder,
                       const std::filesystem::path& out_dir, int threads) {
  check_mel_config(vocoder, model.mel);
  std::filesystem::create_directories(out_dir);

  struct Outcome {
    std::optional<ManifestItem> item;
    std::string error;
  };
  std::vector<Outcome> outcomes(index.entries.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < index.entries.size(); i = next++) {
      const auto& e = index.entries[i];
      try {
        if (e.wav.empty()) throw Error("conversion_pipeline", "MissingSource", "no source audio for " + e.utterance_id);
        const auto in = audio::load_and_resample(e.wav, model.mel.sample_rate_hz);
        const auto out = convert(in, model, vocoder);
        const auto path = out_dir / (e.utterance_id + ".wav");
        audio::write_wav(path, out.samples, out.sample_rate_hz);
        outcomes[i].item = ManifestItem{e.utterance_id, e.speaker_id, e.wav, path, out.duration_s()};
      } catch (const std::exception& ex) {
        outcomes[i].error = ex.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(index.entries.size())));
  std::vector<std::jthread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  Manifest manifest;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].item)
      manifest.items.push_back(*outcomes[i].item);
    else
      manifest.failures.push_back({index.entries[i].utterance_id, index.entries[i].wav, outcomes[i].error});
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace cvc::convert
