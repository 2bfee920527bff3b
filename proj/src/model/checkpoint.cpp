#include "cvc/model/checkpoint.hpp"

#include "cvc/error.hpp"

#include <cstring>
#include <fstream>

namespace cvc::model {
namespace {

using nlohmann::json;

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& why) {
  throw Error("model_core", "CorruptCheckpoint", path.string() + ": " + why);
}

template <typename T>
void put(std::ofstream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
bool get(std::ifstream& is, T& v) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) return false;
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) acc |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  v = static_cast<T>(acc);
  return true;
}

std::string norm_name(nn::Norm n) { return n == nn::Norm::instance ? "instance" : "none"; }
nn::Norm parse_norm(const std::string& s) {
  if (s == "instance") return nn::Norm::instance;
  if (s == "none") return nn::Norm::none;
  throw Error("model_core", "InvalidConfig", "unknown norm '" + s + "'");
}

}  // namespace

const NamedTensor* Archive::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void Archive::add(const std::string& name, const std::vector<int>& shape, const std::vector<float>& data) {
  tensors.push_back({name, shape, data});
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("model_core", "UnwritableCheckpoint", path.string());
    os.write("CVCK", 4);
    put<std::uint32_t>(os, kArchiveVersion);
    const std::string meta = archive.metadata.dump();
    put<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& t : archive.tensors) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
      os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
      for (int d : t.shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
      for (float f : t.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put<std::uint32_t>(os, bits);
      }
    }
    if (!os) throw Error("model_core", "UnwritableCheckpoint", path.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) corrupt(path, "cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CVCK", 4) != 0) corrupt(path, "bad magic");
  std::uint32_t version = 0;
  if (!get(is, version) || version != kArchiveVersion) corrupt(path, "unsupported version");
  std::uint64_t meta_len = 0;
  if (!get(is, meta_len) || meta_len > (1ull << 30)) corrupt(path, "bad metadata length");
  std::string meta(meta_len, '\0');
  if (!is.read(meta.data(), static_cast<std::streamsize>(meta_len))) corrupt(path, "truncated metadata");

  Archive a;
  try {
    a.metadata = json::parse(meta);
  } catch (const json::exception& e) {
    corrupt(path, e.what());
  }
  std::uint32_t count = 0;
  if (!get(is, count)) corrupt(path, "missing tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    std::uint32_t name_len = 0, rank = 0;
    if (!get(is, name_len) || name_len > 4096) corrupt(path, "bad tensor name");
    t.name.resize(name_len);
    if (!is.read(t.name.data(), name_len) || !get(is, rank) || rank > 8) corrupt(path, "bad tensor header");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      std::uint32_t d = 0;
      if (!get(is, d)) corrupt(path, "bad tensor shape");
      t.shape.push_back(static_cast<int>(d));
      n *= d;
    }
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t bits = 0;
      if (!get(is, bits)) corrupt(path, "truncated tensor " + t.name);
      std::memcpy(&t.data[k], &bits, 4);
    }
    a.tensors.push_back(std::move(t));
  }
  return a;
}

json to_json(const GeneratorConfig& c) {
  return {{"base_channels", c.base_channels}, {"n_resnet_blocks", c.n_resnet_blocks},
          {"n_downsample", c.n_downsample},   {"kernel_size", c.kernel_size},
          {"padding_mode", c.padding_mode},   {"norm", norm_name(c.norm)},
          {"residual_output", c.residual_output}};
}

json to_json(const DiscriminatorConfig& c) {
  return {{"n_layers", c.n_layers}, {"base_channels", c.base_channels}, {"norm", norm_name(c.norm)}};
}

json to_json(const ProjectionConfig& c) {
  return {{"selected_layers", c.selected_layers}, {"patches_per_layer", c.patches_per_layer},
          {"embed_dim", c.embed_dim},             {"temperature", c.temperature},
          {"mean_reduce", c.mean_reduce}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.n_resnet_blocks = j.at("n_resnet_blocks").get<int>();
  c.n_downsample = j.at("n_downsample").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.padding_mode = j.at("padding_mode").get<std::string>();
  c.norm = parse_norm(j.at("norm").get<std::string>());
  c.residual_output = j.at("residual_output").get<bool>();
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.norm = parse_norm(j.at("norm").get<std::string>());
  return c;
}

ProjectionConfig projection_config_from_json(const json& j) {
  ProjectionConfig c;
  c.selected_layers = j.at("selected_layers").get<std::vector<int>>();
  c.patches_per_layer = j.at("patches_per_layer").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.mean_reduce = j.at("mean_reduce").get<bool>();
  return c;
}

void store_params(Archive& archive, const nn::ParamRefs<float>& params) {
  for (const auto* p : params) archive.add(p->name, p->shape, {p->value.begin(), p->value.end()});
}

void load_params(const Archive& archive, const nn::ParamRefs<float>& params) {
  for (auto* p : params) {
    const auto* t = archive.find(p->name);
    if (!t) throw Error("model_core", "CorruptCheckpoint", "missing tensor " + p->name);
    if (t->shape != p->shape || t->data.size() != p->value.size())
      throw Error("model_core", "CorruptCheckpoint", "shape mismatch for " + p->name);
    p->value.assign(t->data.begin(), t->data.end());
  }
}

Generator<float> load_generator(const Archive& archive) {
  try {
    Generator<float> g(generator_config_from_json(archive.metadata.at("generator")));
    load_params(archive, g.parameters());
    return g;
  } catch (const json::exception& e) {
    throw Error("model_core", "CorruptCheckpoint", e.what());
  }
}

}  // namespace cvc::model
