#include "dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "errors.hpp"

namespace mdlrs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <class T>
std::vector<T> read_raw(const fs::path& path, std::size_t count, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open {} '{}'", what, path.string()));
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uintmax_t>(in.tellg());
  const std::uintmax_t expected = count * sizeof(T);
  if (bytes != expected)
    fail(ErrorKind::Format, fmt::format("{} '{}' has {} bytes, expected {}", what, path.string(),
                                        bytes, expected));
  in.seekg(0);
  std::vector<T> v(count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected));
  if (!in) fail(ErrorKind::Io, fmt::format("read failed for {} '{}'", what, path.string()));
  if constexpr (std::endian::native == std::endian::big)
    for (auto& x : v) x = byteswap_value(x);
  return v;
}

template <class T>
void write_raw(const fs::path& path, const std::vector<T>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot create '{}'", path.string()));
  if constexpr (std::endian::native == std::endian::big) {
    for (T x : v) {
      x = byteswap_value(x);
      out.write(reinterpret_cast<const char*>(&x), sizeof(T));
    }
  } else {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  if (!out) fail(ErrorKind::Io, fmt::format("write failed for '{}'", path.string()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) fail(ErrorKind::Format, fmt::format("{}: missing '{}'", where, key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, fmt::format("{}: bad '{}': {}", where, key, e.what()));
  }
}

}  // namespace

std::vector<std::size_t> MultimodalDataset::train_pixels() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < train_mask.size(); ++i)
    if (train_mask[i]) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> MultimodalDataset::test_pixels() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < test_mask.size(); ++i)
    if (test_mask[i]) idx.push_back(i);
  return idx;
}

void validate(const MultimodalDataset& ds) {
  require(ds.height > 0 && ds.width > 0, ErrorKind::Validation, "dataset has an empty scene");
  require(ds.num_classes >= 1, ErrorKind::Validation, "dataset needs at least one class");
  require(ds.modalities.size() == 2, ErrorKind::Validation,
          fmt::format("expected 2 modalities, found {}", ds.modalities.size()));
  const std::size_t n = ds.pixels();
  for (const auto& m : ds.modalities) {
    require(m.bands >= 1, ErrorKind::Validation, "modality '" + m.name + "' has no bands");
    require(m.raster.size() == m.bands * n, ErrorKind::Format,
            fmt::format("modality '{}' holds {} values, expected {}", m.name, m.raster.size(),
                        m.bands * n));
  }
  require(ds.labels.size() == n && ds.train_mask.size() == n && ds.test_mask.size() == n,
          ErrorKind::Format, "labels and masks must cover every pixel");
  for (std::size_t i = 0; i < n; ++i) {
    const int l = ds.labels[i];
    const std::size_t r = i / ds.width, c = i % ds.width;
    require(l >= 0 && static_cast<std::size_t>(l) <= ds.num_classes, ErrorKind::Validation,
            fmt::format("label {} at ({},{}) outside 0..{}", l, r, c, ds.num_classes));
    const int tr = ds.train_mask[i], te = ds.test_mask[i];
    require((tr == 0 || tr == 1) && (te == 0 || te == 1), ErrorKind::Validation,
            fmt::format("mask value at ({},{}) is not 0/1", r, c));
    require(!(tr && te), ErrorKind::Validation,
            fmt::format("train and test masks overlap at ({},{})", r, c));
    require(!(tr || te) || l != 0, ErrorKind::Validation,
            fmt::format("masked pixel ({},{}) is unlabeled", r, c));
  }
}

std::array<BandScaling, 2> compute_scaling(const MultimodalDataset& ds) {
  const auto train = ds.train_pixels();
  std::array<BandScaling, 2> out;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& m = ds.modalities[s];
    out[s].min.assign(m.bands, 0.0f);
    out[s].max.assign(m.bands, 0.0f);
    if (train.empty()) continue;
    for (std::size_t b = 0; b < m.bands; ++b) {
      const float* band = m.raster.data() + b * ds.pixels();
      float lo = band[train[0]], hi = lo;
      for (std::size_t i : train) {
        lo = std::min(lo, band[i]);
        hi = std::max(hi, band[i]);
      }
      out[s].min[b] = lo;
      out[s].max[b] = hi;
    }
  }
  return out;
}

MultimodalDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  json j;
  try {
    j = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, fmt::format("'{}': {}", manifest_path.string(), e.what()));
  }
  const std::string where = manifest_path.string();
  MultimodalDataset ds;
  ds.name = get_field<std::string>(j, "name", where);
  ds.height = get_field<std::size_t>(j, "height", where);
  ds.width = get_field<std::size_t>(j, "width", where);
  ds.num_classes = get_field<std::size_t>(j, "num_classes", where);
  const json mods = get_field<json>(j, "modalities", where);
  require(mods.is_array() && mods.size() == 2, ErrorKind::Format,
          where + ": 'modalities' must list exactly two entries");
  const std::size_t n = ds.height * ds.width;
  require(n > 0, ErrorKind::Format, where + ": empty scene");
  for (const auto& mj : mods) {
    Modality m;
    m.name = get_field<std::string>(mj, "name", where);
    m.bands = get_field<std::size_t>(mj, "bands", where);
    m.file = get_field<std::string>(mj, "file", where);
    m.raster = read_raw<float>(dir / m.file, m.bands * n, "raster of modality '" + m.name + "'");
    ds.modalities.push_back(std::move(m));
  }
  ds.labels = read_raw<std::int32_t>(dir / get_field<std::string>(j, "labels_file", where), n,
                                     "labels");
  ds.train_mask = read_raw<std::int32_t>(
      dir / get_field<std::string>(j, "train_mask_file", where), n, "train mask");
  ds.test_mask = read_raw<std::int32_t>(dir / get_field<std::string>(j, "test_mask_file", where),
                                        n, "test mask");
  validate(ds);
  ds.scaling = compute_scaling(ds);
  return ds;
}

void save_dataset(const MultimodalDataset& ds, const fs::path& dir) {
  validate(ds);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  json mods = json::array();
  for (std::size_t s = 0; s < ds.modalities.size(); ++s) {
    const auto& m = ds.modalities[s];
    const std::string file = m.file.empty() ? fmt::format("modality{}.f32", s + 1) : m.file;
    mods.push_back({{"name", m.name}, {"bands", m.bands}, {"file", file}});
    write_raw(dir / file, m.raster);
  }
  json j = {{"name", ds.name},
            {"height", ds.height},
            {"width", ds.width},
            {"num_classes", ds.num_classes},
            {"modalities", mods},
            {"labels_file", "labels.i32"},
            {"train_mask_file", "train_mask.i32"},
            {"test_mask_file", "test_mask.i32"}};
  write_raw(dir / "labels.i32", ds.labels);
  write_raw(dir / "train_mask.i32", ds.train_mask);
  write_raw(dir / "test_mask.i32", ds.test_mask);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write manifest in '" + dir.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed for manifest in '" + dir.string() + "'");
}

MultimodalDataset scale_bands(const MultimodalDataset& ds,
                              const std::array<BandScaling, 2>& scaling) {
  MultimodalDataset out = ds;
  const std::size_t n = ds.pixels();
  for (std::size_t s = 0; s < 2; ++s) {
    auto& m = out.modalities[s];
    require(scaling[s].bands() == m.bands && scaling[s].max.size() == m.bands,
            ErrorKind::Dimension,
            fmt::format("scaling for modality {} covers {} bands, raster has {}", s + 1,
                        scaling[s].bands(), m.bands));
    for (std::size_t b = 0; b < m.bands; ++b) {
      float* band = m.raster.data() + b * n;
      if (scaling[s].constant(b)) {
        std::fill(band, band + n, 0.0f);
        continue;
      }
      const double lo = scaling[s].min[b];
      const double range = static_cast<double>(scaling[s].max[b]) - lo;
      for (std::size_t i = 0; i < n; ++i)
        band[i] = static_cast<float>(std::clamp((band[i] - lo) / range, 0.0, 1.0));
    }
  }
  out.scaling = scaling;
  return out;
}

MultimodalDataset scale_bands(const MultimodalDataset& ds) { return scale_bands(ds, ds.scaling); }

Tensor extract_patch(const MultimodalDataset& ds, std::size_t r, std::size_t c, std::size_t size,
                     std::size_t s) {
  require(r < ds.height && c < ds.width, ErrorKind::Argument,
          fmt::format("pixel ({},{}) outside {}x{} scene", r, c, ds.height, ds.width));
  require(s < ds.modalities.size(), ErrorKind::Argument, "modality index out of range");
  require(size % 2 == 1, ErrorKind::Argument, "patch size must be odd");
  const std::size_t d = ds.modalities[s].bands;
  const auto half = static_cast<std::ptrdiff_t>(size / 2);
  const auto clamp_to = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  Tensor patch({size, size, d});
  float* out = patch.ptr();
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t rr = clamp_to(static_cast<std::ptrdiff_t>(r) - half + static_cast<std::ptrdiff_t>(i), ds.height);
    for (std::size_t j = 0; j < size; ++j) {
      const std::size_t cc = clamp_to(static_cast<std::ptrdiff_t>(c) - half + static_cast<std::ptrdiff_t>(j), ds.width);
      for (std::size_t b = 0; b < d; ++b) *out++ = ds.value(s, b, rr, cc);
    }
  }
  return patch;
}

std::vector<float> one_hot(int label, std::size_t num_classes) {
  require(label >= 1 && static_cast<std::size_t>(label) <= num_classes, ErrorKind::Argument,
          fmt::format("label {} outside 1..{}", label, num_classes));
  std::vector<float> v(num_classes, 0.0f);
  v[static_cast<std::size_t>(label - 1)] = 1.0f;
  return v;
}

PatchBatch make_batch(const MultimodalDataset& ds, std::span<const std::size_t> pixels,
                      Flavor flavor, bool with_labels) {
  PatchBatch batch;
  const std::size_t b = pixels.size();
  const std::size_t d1 = ds.modalities[0].bands, d2 = ds.modalities[1].bands;
  const std::size_t area = flavor == Flavor::CNN ? kPatchSize * kPatchSize : 1;
  batch.x1 = flavor == Flavor::CNN ? Tensor({b, kPatchSize, kPatchSize, d1}) : Tensor({b, d1});
  batch.x2 = flavor == Flavor::CNN ? Tensor({b, kPatchSize, kPatchSize, d2}) : Tensor({b, d2});
  if (with_labels) batch.onehot = Tensor({b, ds.num_classes});
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t p = pixels[k];
    require(p < ds.pixels(), ErrorKind::Argument, fmt::format("pixel index {} out of range", p));
    const std::size_t r = p / ds.width, c = p % ds.width;
    batch.coords.emplace_back(r, c);
    if (flavor == Flavor::CNN) {
      const Tensor p1 = extract_patch(ds, r, c, kPatchSize, 0);
      const Tensor p2 = extract_patch(ds, r, c, kPatchSize, 1);
      std::copy(p1.data().begin(), p1.data().end(), batch.x1.ptr() + k * area * d1);
      std::copy(p2.data().begin(), p2.data().end(), batch.x2.ptr() + k * area * d2);
    } else {
      for (std::size_t band = 0; band < d1; ++band) batch.x1[k * d1 + band] = ds.value(0, band, r, c);
      for (std::size_t band = 0; band < d2; ++band) batch.x2[k * d2 + band] = ds.value(1, band, r, c);
    }
    if (with_labels) {
      const int l = ds.labels[p];
      const auto y = one_hot(l, ds.num_classes);
      std::copy(y.begin(), y.end(), batch.onehot.ptr() + k * ds.num_classes);
      batch.labels.push_back(l);
    }
  }
  return batch;
}

PatchBatch zero_modality(PatchBatch batch, int s) {
  require(s == 1 || s == 2, ErrorKind::Argument, "modality must be 1 or 2");
  (s == 1 ? batch.x1 : batch.x2).fill(0.0f);
  return batch;
}

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::MML: return "mml";
    case Protocol::CML1: return "cml1";
    case Protocol::CML2: return "cml2";
  }
  return "?";
}

std::optional<Protocol> parse_protocol(std::string_view name) {
  for (auto p : {Protocol::MML, Protocol::CML1, Protocol::CML2})
    if (name == to_string(p)) return p;
  return std::nullopt;
}

PatchBatch apply_protocol(PatchBatch batch, Protocol p) {
  switch (p) {
    case Protocol::MML: return batch;
    case Protocol::CML1: return zero_modality(std::move(batch), 2);
    case Protocol::CML2: return zero_modality(std::move(batch), 1);
  }
  return batch;
}

LabeledSet<float> to_labeled_set(const PatchBatch& batch, std::size_t num_classes) {
  LabeledSet<float> set;
  set.input.x1 = batch.x1;
  set.input.x2 = batch.x2;
  set.labels = batch.labels;
  set.num_classes = num_classes;
  return set;
}

SynthSpec parse_synth_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::Config, "synthetic spec must be a JSON object");
  SynthSpec s;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "name") s.name = v.get<std::string>();
      else if (key == "num_classes") s.num_classes = v.get<std::size_t>();
      else if (key == "bands1") s.bands1 = v.get<std::size_t>();
      else if (key == "bands2") s.bands2 = v.get<std::size_t>();
      else if (key == "train_per_class") s.train_per_class = v.get<std::size_t>();
      else if (key == "test_per_class") s.test_per_class = v.get<std::size_t>();
      else if (key == "noise") s.noise = v.get<double>();
      else if (key == "separation") s.separation = v.get<double>();
      else if (key == "height") s.height = v.get<std::size_t>();
      else if (key == "width") s.width = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else fail(ErrorKind::Config, "unknown synthetic spec key '" + key + "'");
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "bad value for '" + key + "': " + e.what());
    }
  }
  return s;
}

void validate(const SynthSpec& s) {
  require(s.num_classes == 4, ErrorKind::Argument,
          fmt::format("the complementary generator needs exactly 4 classes, got {}", s.num_classes));
  require(s.bands1 >= 1 && s.bands2 >= 1, ErrorKind::Argument, "band counts must be positive");
  require(s.train_per_class >= 1 && s.test_per_class >= 1, ErrorKind::Argument,
          "per-class sample counts must be positive");
  require(s.noise >= 0.0 && std::isfinite(s.noise), ErrorKind::Argument,
          "noise must be finite and non-negative");
  require(std::isfinite(s.separation), ErrorKind::Argument, "separation must be finite");
  const std::size_t labeled = s.num_classes * (s.train_per_class + s.test_per_class);
  require((s.height == 0) == (s.width == 0), ErrorKind::Argument,
          "give both height and width or neither");
  if (s.height)
    require(s.height * s.width >= labeled, ErrorKind::Argument,
            fmt::format("{}x{} scene cannot hold {} labeled pixels", s.height, s.width, labeled));
}

MultimodalDataset synth_generate(const SynthSpec& spec, Prng& prng) {
  validate(spec);
  const std::size_t c = spec.num_classes;
  const std::size_t labeled = c * (spec.train_per_class + spec.test_per_class);
  MultimodalDataset ds;
  ds.name = spec.name;
  ds.num_classes = c;
  if (spec.height) {
    ds.height = spec.height;
    ds.width = spec.width;
  } else {
    ds.width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(labeled))));
    ds.height = (labeled + ds.width - 1) / ds.width;
  }
  const std::size_t n = ds.pixels();

  // Class means per modality: base + code(k) * separation * u, u a random
  // unit direction; code is the class's side of the modality's partition.
  const std::array<std::size_t, 2> bands = {spec.bands1, spec.bands2};
  std::array<std::vector<std::vector<double>>, 2> means;
  for (std::size_t s = 0; s < 2; ++s) {
    const std::size_t d = bands[s];
    std::vector<double> base(d), dir(d);
    for (auto& v : base) v = prng.uniform();
    double norm = 0.0;
    while (norm == 0.0) {
      norm = 0.0;
      for (auto& v : dir) {
        v = prng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (std::size_t k = 0; k < c; ++k) {
      const double code = s == 0 ? static_cast<double>(k / 2) : static_cast<double>(k % 2);
      std::vector<double> mu(d);
      for (std::size_t b = 0; b < d; ++b) mu[b] = base[b] + code * spec.separation * dir[b] / norm;
      means[s].push_back(std::move(mu));
    }
  }

  std::vector<std::size_t> layout(n);
  for (std::size_t i = 0; i < n; ++i) layout[i] = i;
  prng.shuffle(std::span<std::size_t>(layout));

  ds.labels.assign(n, 0);
  ds.train_mask.assign(n, 0);
  ds.test_mask.assign(n, 0);
  std::vector<std::size_t> spectrum_class(n);
  std::size_t next = 0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < spec.train_per_class + spec.test_per_class; ++i) {
      const std::size_t p = layout[next++];
      ds.labels[p] = static_cast<std::int32_t>(k + 1);
      (i < spec.train_per_class ? ds.train_mask : ds.test_mask)[p] = 1;
      spectrum_class[p] = k;
    }
  }
  for (; next < n; ++next) spectrum_class[layout[next]] = prng.below(c);

  for (std::size_t s = 0; s < 2; ++s) {
    Modality m;
    m.name = fmt::format("modality{}", s + 1);
    m.bands = bands[s];
    m.file = fmt::format("modality{}.f32", s + 1);
    m.raster.assign(m.bands * n, 0.0f);
    for (std::size_t p = 0; p < n; ++p) {
      const auto& mu = means[s][spectrum_class[p]];
      for (std::size_t b = 0; b < m.bands; ++b)
        m.raster[b * n + p] = static_cast<float>(mu[b] + spec.noise * prng.normal());
    }
    ds.modalities.push_back(std::move(m));
  }
  validate(ds);
  ds.scaling = compute_scaling(ds);
  return ds;
}

}  // namespace mdlrs
