#include "occgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "occgen/config.hpp"

namespace occgen {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; byte swapping not "
              "implemented");

constexpr char kMagic[4] = {'O', 'C', 'G', 'N'};
constexpr uint32_t kVersion = 1;

void write_tensor(std::ofstream& f, const Matrix& m) {
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(real) * m.size()));
}

void read_tensor(std::ifstream& f, Matrix& m, const std::string& path) {
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(sizeof(real) * m.size()));
  if (!f) throw FormatError("short read in checkpoint " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m,
                     const CheckpointInfo& info) {
  json header;
  header["format_version"] = kVersion;
  header["model"] = model_config_to_json(m.cfg);
  header["stage"] = info.stage;
  header["step"] = info.step;
  header["seed"] = info.seed;
  json params = json::array();
  for (int i = 0; i < m.ps.count(); ++i) {
    const auto& e = m.ps.at(i);
    json p;
    p["name"] = e.name;
    p["rows"] = e.value.rows();
    p["cols"] = e.value.cols();
    params.push_back(p);
  }
  header["params"] = params;
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write checkpoint " + path);
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (int i = 0; i < m.ps.count(); ++i) {
    const auto& e = m.ps.at(i);
    write_tensor(f, e.value);
    write_tensor(f, e.m);
    write_tensor(f, e.v);
  }
  if (!f) throw FormatError("write failure on checkpoint " + path);
}

Model load_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad checkpoint magic in " + path);
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!f || version != kVersion)
    throw FormatError("unsupported checkpoint version in " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!f) throw FormatError("truncated checkpoint header in " + path);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw FormatError("truncated checkpoint header in " + path);
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header parse error: ") +
                      e.what());
  }

  Model m = Model::create(model_config_from_json(header.at("model")));
  if (info) {
    info->stage = header.at("stage").get<int>();
    info->step = header.at("step").get<long>();
    info->seed = header.at("seed").get<uint64_t>();
  }

  // The manifest must agree with the store a fresh Model produces from
  // the same config; the payload carries no per-tensor framing.
  const auto& params = header.at("params");
  if (static_cast<int>(params.size()) != m.ps.count())
    throw FormatError("checkpoint parameter count mismatch in " + path);
  for (int i = 0; i < m.ps.count(); ++i) {
    auto& e = m.ps.at(i);
    const auto& p = params[i];
    if (p.at("name").get<std::string>() != e.name ||
        p.at("rows").get<Eigen::Index>() != e.value.rows() ||
        p.at("cols").get<Eigen::Index>() != e.value.cols())
      throw FormatError("checkpoint manifest mismatch at " + e.name);
    read_tensor(f, e.value, path);
    read_tensor(f, e.m, path);
    read_tensor(f, e.v, path);
  }
  return m;
}

}  // namespace occgen
