#include "occgen/dataset_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

namespace occgen {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "dataset format is little-endian; byte swapping not implemented");

struct TensorSpec {
  std::string name;
  std::vector<long> shape;
  std::size_t offset;  // bytes into the scene file
  std::size_t floats() const {
    std::size_t n = 1;
    for (long d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

std::vector<TensorSpec> tensor_layout(const SceneConfig& cfg) {
  const long T = cfg.num_views, H = cfg.image_size, W = cfg.image_size;
  const long K = cfg.max_objects;
  std::vector<TensorSpec> specs = {
      {"images", {T, H, W, 3}, 0},
      {"masks", {T, K + 1, H, W}, 0},
      {"complete_shapes", {T, K, H, W}, 0},
      {"depth_order", {T, K}, 0},
      {"count", {1}, 0},
      {"timesteps", {T}, 0},
  };
  std::size_t at = 0;
  for (auto& s : specs) {
    s.offset = at;
    at += s.floats() * sizeof(float);
  }
  return specs;
}

std::size_t total_bytes(const std::vector<TensorSpec>& specs) {
  return specs.back().offset + specs.back().floats() * sizeof(float);
}

std::string scene_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05d.bin", index);
  return buf;
}

void append(std::vector<float>& out, real v) {
  out.push_back(static_cast<float>(v));
}

std::vector<float> flatten_scene(const Scene& sc) {
  std::vector<float> out;
  const Eigen::Index n = static_cast<Eigen::Index>(sc.H) * sc.W;
  for (int t = 0; t < sc.T(); ++t)
    for (Eigen::Index p = 0; p < n; ++p)
      for (int c = 0; c < sc.C; ++c) append(out, sc.images[t](p, c));
  for (int t = 0; t < sc.T(); ++t)
    for (int k = 0; k <= sc.K_gt; ++k)
      for (Eigen::Index p = 0; p < n; ++p) append(out, sc.masks[t](p, k));
  for (int t = 0; t < sc.T(); ++t)
    for (int k = 0; k < sc.K_gt; ++k)
      for (Eigen::Index p = 0; p < n; ++p) append(out, sc.shapes[t](p, k));
  for (int t = 0; t < sc.T(); ++t)
    for (int k = 0; k < sc.K_gt; ++k) append(out, sc.depth_order(t, k));
  append(out, static_cast<real>(sc.count));
  for (int t = 0; t < sc.T(); ++t) append(out, static_cast<real>(sc.timesteps[t]));
  return out;
}

Scene unflatten_scene(const std::vector<float>& in, const SceneConfig& cfg) {
  Scene sc;
  sc.H = cfg.image_size;
  sc.W = cfg.image_size;
  sc.K_gt = cfg.max_objects;
  const int T = cfg.num_views;
  const Eigen::Index n = static_cast<Eigen::Index>(sc.H) * sc.W;
  std::size_t at = 0;
  auto next = [&]() -> real { return static_cast<real>(in[at++]); };
  sc.images.resize(T);
  sc.masks.resize(T);
  sc.shapes.resize(T);
  for (int t = 0; t < T; ++t) {
    sc.images[t].resize(n, 3);
    for (Eigen::Index p = 0; p < n; ++p)
      for (int c = 0; c < 3; ++c) sc.images[t](p, c) = next();
  }
  for (int t = 0; t < T; ++t) {
    sc.masks[t].resize(n, sc.K_gt + 1);
    for (int k = 0; k <= sc.K_gt; ++k)
      for (Eigen::Index p = 0; p < n; ++p) sc.masks[t](p, k) = next();
  }
  for (int t = 0; t < T; ++t) {
    sc.shapes[t].resize(n, sc.K_gt);
    for (int k = 0; k < sc.K_gt; ++k)
      for (Eigen::Index p = 0; p < n; ++p) sc.shapes[t](p, k) = next();
  }
  sc.depth_order.resize(T, sc.K_gt);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < sc.K_gt; ++k) sc.depth_order(t, k) = next();
  sc.count = static_cast<int>(next());
  sc.timesteps.resize(T);
  for (int t = 0; t < T; ++t) sc.timesteps[t] = static_cast<int>(next());
  return sc;
}

}  // namespace

json scene_config_to_json(const SceneConfig& cfg) {
  json j;
  j["image_size"] = cfg.image_size;
  j["num_views"] = cfg.num_views;
  j["count_min"] = cfg.count_min;
  j["count_max"] = cfg.count_max;
  j["max_objects"] = cfg.max_objects;
  json shapes = json::array();
  for (auto k : cfg.shape_catalog) shapes.push_back(shape_name(k));
  j["shapes"] = shapes;
  json palette = json::array();
  for (const auto& c : cfg.palette) palette.push_back({c[0], c[1], c[2]});
  j["palette"] = palette;
  j["rho_range"] = {cfg.rho_min, cfg.rho_max};
  j["phi_range"] = {cfg.phi_min, cfg.phi_max};
  j["seed"] = cfg.seed;
  return j;
}

SceneConfig scene_config_from_json(const json& j) {
  SceneConfig cfg;
  static const std::vector<std::string> known = {
      "image_size", "num_views", "count_min", "count_max", "max_objects",
      "shapes",     "palette",   "rho_range", "phi_range", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown dataset config key: " + it.key());
  }
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.num_views = j.value("num_views", cfg.num_views);
  cfg.count_min = j.value("count_min", cfg.count_min);
  cfg.count_max = j.value("count_max", cfg.count_max);
  cfg.max_objects = j.value("max_objects", cfg.max_objects);
  if (j.contains("shapes")) {
    cfg.shape_catalog.clear();
    for (const auto& s : j["shapes"])
      cfg.shape_catalog.push_back(shape_from_name(s.get<std::string>()));
  }
  if (j.contains("palette")) {
    cfg.palette.clear();
    for (const auto& c : j["palette"])
      cfg.palette.push_back({c.at(0).get<real>(), c.at(1).get<real>(),
                             c.at(2).get<real>()});
  }
  if (j.contains("rho_range")) {
    cfg.rho_min = j["rho_range"].at(0).get<real>();
    cfg.rho_max = j["rho_range"].at(1).get<real>();
  }
  if (j.contains("phi_range")) {
    cfg.phi_min = j["phi_range"].at(0).get<real>();
    cfg.phi_max = j["phi_range"].at(1).get<real>();
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

void write_dataset(const std::vector<Scene>& scenes, const SceneConfig& cfg,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto specs = tensor_layout(cfg);

  json manifest;
  manifest["version"] = kDatasetVersion;
  manifest["config"] = scene_config_to_json(cfg);
  manifest["scene_count"] = scenes.size();
  json tensors = json::array();
  for (const auto& s : specs) {
    json t;
    t["name"] = s.name;
    t["dtype"] = "float32";
    t["shape"] = s.shape;
    t["byte_offset"] = s.offset;
    tensors.push_back(t);
  }
  manifest["tensors"] = tensors;
  {
    std::ofstream f(dir / "manifest.json");
    if (!f) throw FormatError("cannot write manifest in " + dir.string());
    f << manifest.dump(2) << "\n";
  }

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& sc = scenes[i];
    if (sc.T() != cfg.num_views || sc.H != cfg.image_size ||
        sc.K_gt != cfg.max_objects)
      throw FormatError("scene " + std::to_string(i) +
                        " does not match dataset config dims");
    const std::vector<float> flat = flatten_scene(sc);
    if (flat.size() * sizeof(float) != total_bytes(specs))
      throw FormatError("internal: scene byte size mismatch");
    std::ofstream f(dir / scene_file_name(static_cast<int>(i)),
                    std::ios::binary);
    if (!f) throw FormatError("cannot write scene file " + std::to_string(i));
    f.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(float)));
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw FormatError("missing manifest.json in " + dir.string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest parse error: ") + e.what());
  }
  if (!manifest.contains("version") ||
      manifest["version"].get<int>() != kDatasetVersion)
    throw FormatError("dataset version mismatch");

  Dataset ds;
  ds.config = scene_config_from_json(manifest.at("config"));
  const auto specs = tensor_layout(ds.config);
  // Cross-check the manifest's layout against the one this reader
  // derives from the config; a divergence means foreign bytes.
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != specs.size()) throw FormatError("tensor list mismatch");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != specs[i].name ||
        tensors[i].at("byte_offset").get<std::size_t>() != specs[i].offset ||
        tensors[i].at("dtype").get<std::string>() != "float32")
      throw FormatError("tensor layout mismatch at " + specs[i].name);
  }

  const std::size_t count = manifest.at("scene_count").get<std::size_t>();
  const std::size_t expect = total_bytes(specs);
  ds.scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto path = dir / scene_file_name(static_cast<int>(i));
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw FormatError("missing scene file " + path.string());
    const std::size_t bytes = static_cast<std::size_t>(f.tellg());
    if (bytes != expect)
      throw FormatError("scene file " + path.string() + " has " +
                        std::to_string(bytes) + " bytes, expected " +
                        std::to_string(expect));
    f.seekg(0);
    std::vector<float> flat(expect / sizeof(float));
    f.read(reinterpret_cast<char*>(flat.data()),
           static_cast<std::streamsize>(expect));
    if (!f) throw FormatError("short read on " + path.string());
    ds.scenes.push_back(unflatten_scene(flat, ds.config));
  }
  return ds;
}

}  // namespace occgen
