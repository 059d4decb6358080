#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "errors.hpp"

namespace mdlrs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "mdlrs-checkpoint";
constexpr int kFormatVersion = 1;

// Weight + bias, plus gamma, beta and the two running statistics.
constexpr std::size_t dense(std::size_t in, std::size_t out, bool bn, std::size_t k = 1) {
  return k * k * in * out + out + (bn ? 4 * out : 0);
}

std::size_t exnet_count(Flavor f, std::size_t d) {
  const std::size_t k1 = f == Flavor::CNN ? 3 : 1;
  return dense(d, 16, true, k1) + dense(16, 32, true) + dense(32, 64, true, k1) +
         dense(64, 128, true);
}

std::size_t funet_count(std::size_t in, std::size_t c) {
  return dense(in, 128, true) + dense(128, 64, true) + dense(64, c, false);
}

std::size_t decoder_count(std::size_t d) {
  return dense(128, 64, false) + dense(64, 32, false) + dense(32, 16, false) + dense(16, d, false);
}

template <class F>
void for_each_tensor(LayerParams<float>& p, F&& f) {
  for (Tensor* t : {&p.W, &p.b, &p.gamma, &p.beta, &p.running_mean, &p.running_var})
    if (!t->empty()) f(*t);
}

}  // namespace

std::size_t expected_parameter_count(const ModelSpec& s) {
  const std::size_t c = s.num_classes;
  switch (s.arch) {
    case Architecture::Single1: return exnet_count(s.flavor, s.d1) + funet_count(128, c);
    case Architecture::Single2: return exnet_count(s.flavor, s.d2) + funet_count(128, c);
    case Architecture::Early: return exnet_count(s.flavor, s.d1 + s.d2) + funet_count(128, c);
    case Architecture::Middle:
      return exnet_count(s.flavor, s.d1) + exnet_count(s.flavor, s.d2) + funet_count(256, c);
    case Architecture::EnDe:
      return exnet_count(s.flavor, s.d1) + exnet_count(s.flavor, s.d2) + funet_count(256, c) +
             decoder_count(s.d1) + decoder_count(s.d2);
    case Architecture::Late:
      return exnet_count(s.flavor, s.d1) + exnet_count(s.flavor, s.d2) +
             2 * (dense(128, 128, true) + dense(128, 64, true)) + dense(128, c, false);
    case Architecture::Cross:
      return exnet_count(s.flavor, s.d1) + exnet_count(s.flavor, s.d2) +
             3 * dense(128, 128, true) + funet_count(256, c);
  }
  return 0;
}

void save_checkpoint(const Classifier& clf, const fs::path& dir) {
  const ModelSpec& s = clf.spec();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));

  std::vector<float> blob;
  blob.reserve(expected_parameter_count(s));
  Model<float> copy = clf.model;
  copy.for_each_block([&](Block<float>& b, BlockSlot) {
    for_each_tensor(b.params, [&](Tensor& t) { blob.insert(blob.end(), t.data().begin(), t.data().end()); });
  });
  require(blob.size() == expected_parameter_count(s), ErrorKind::State,
          fmt::format("model holds {} scalars, topology expects {}", blob.size(),
                      expected_parameter_count(s)));

  json scaling = json::array();
  for (const auto& sc : clf.scaling) scaling.push_back({{"min", sc.min}, {"max", sc.max}});
  const json manifest = {{"format", kFormatTag},
                         {"version", kFormatVersion},
                         {"flavor", to_string(s.flavor)},
                         {"fusion", to_string(s.arch)},
                         {"num_classes", s.num_classes},
                         {"bands", {s.d1, s.d2}},
                         {"patch_size", s.flavor == Flavor::CNN ? kPatchSize : 1},
                         {"param_count", blob.size()},
                         {"scaling", scaling}};

  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot create params.bin in '" + dir.string() + "'");
    for (float v : blob) {
      std::uint32_t u = std::bit_cast<std::uint32_t>(v);
      unsigned char le[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                             static_cast<unsigned char>(u >> 16),
                             static_cast<unsigned char>(u >> 24)};
      out.write(reinterpret_cast<const char*>(le), 4);
    }
    if (!out) fail(ErrorKind::Io, "write failed for params.bin in '" + dir.string() + "'");
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot create manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed for manifest in '" + dir.string() + "'");
}

Classifier load_checkpoint(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream min(mpath);
  if (!min) fail(ErrorKind::Io, fmt::format("cannot open '{}'", mpath.string()));
  json j;
  ModelSpec spec;
  Classifier clf;
  std::size_t param_count = 0;
  try {
    j = json::parse(min);
    if (j.at("format").get<std::string>() != kFormatTag || j.at("version").get<int>() != kFormatVersion)
      fail(ErrorKind::Format, mpath.string() + ": not a version-1 checkpoint manifest");
    const auto flavor = parse_flavor(j.at("flavor").get<std::string>());
    const auto arch = parse_architecture(j.at("fusion").get<std::string>());
    if (!flavor || !arch) fail(ErrorKind::Format, mpath.string() + ": unknown flavor or fusion");
    spec.flavor = *flavor;
    spec.arch = *arch;
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    const auto bands = j.at("bands").get<std::vector<std::size_t>>();
    if (bands.size() != 2) fail(ErrorKind::Format, mpath.string() + ": 'bands' needs two entries");
    spec.d1 = bands[0];
    spec.d2 = bands[1];
    param_count = j.at("param_count").get<std::size_t>();
    const auto& sc = j.at("scaling");
    if (!sc.is_array() || sc.size() != 2)
      fail(ErrorKind::Format, mpath.string() + ": 'scaling' needs two entries");
    for (std::size_t s = 0; s < 2; ++s) {
      clf.scaling[s].min = sc[s].at("min").get<std::vector<float>>();
      clf.scaling[s].max = sc[s].at("max").get<std::vector<float>>();
      if (clf.scaling[s].min.size() != bands[s] || clf.scaling[s].max.size() != bands[s])
        fail(ErrorKind::Format, fmt::format("{}: scaling for modality {} does not match {} bands",
                                            mpath.string(), s + 1, bands[s]));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, fmt::format("'{}': {}", mpath.string(), e.what()));
  }

  const std::size_t expected = expected_parameter_count(spec);
  require(param_count == expected, ErrorKind::Format,
          fmt::format("checkpoint declares {} parameters, topology has {}", param_count, expected));

  const fs::path ppath = dir / "params.bin";
  std::ifstream in(ppath, std::ios::binary);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", ppath.string()));
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() == expected * 4, ErrorKind::Format,
          fmt::format("'{}' has {} bytes, expected {}", ppath.string(), bytes.size(), expected * 4));

  clf.model = Model<float>(spec, 0);
  std::size_t pos = 0;
  clf.model.for_each_block([&](Block<float>& b, BlockSlot) {
    for_each_tensor(b.params, [&](Tensor& t) {
      for (float& v : t.data()) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * pos++);
        const std::uint32_t u = std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
                                std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
        v = std::bit_cast<float>(u);
      }
    });
  });
  require(pos == expected, ErrorKind::Format, "parameter layout mismatch while loading");
  return clf;
}

}  // namespace mdlrs
