#include "rwseg/outputs.hpp"

#include <cstring>
#include <json.hpp>
#include <sstream>

#include "byte_io.hpp"
#include "rwseg/error.hpp"
#include "rwseg/nrvf.hpp"

namespace rwseg {

using json = nlohmann::ordered_json;

std::string manifest_to_json(const RunManifest& m) {
  const auto& c = m.config;
  json j;
  j["config"] = {
      {"alpha", c.alpha},
      {"steps", c.steps},
      {"beta", c.beta},
      {"epsilon_self", c.epsilon_self},
      {"c", c.temperature},
      {"residual_tolerance", c.residual_tolerance},
      {"mode", c.mode},
      {"fusion", c.fusion},
      {"affinity", c.affinity},
      {"order", c.order},
      {"nonneg", c.nonneg},
      {"seed", c.seed},
      {"upsample", {c.upsample_h, c.upsample_w}},
  };
  j["input_path"] = m.input_path;
  j["source_tag"] = m.source_tag;
  j["grid"] = {m.grid_h, m.grid_w};
  j["classes"] = m.classes;
  j["class_names"] = m.class_names;
  json heads = json::array();
  for (const auto& h : m.heads) {
    heads.push_back({{"layer_index", h.layer_index},
                     {"head_index", h.head_index},
                     {"entropy", h.entropy},
                     {"weight", h.weight}});
  }
  j["heads"] = heads;
  j["steps_used"] = m.steps_used;
  j["residual_bound"] = m.residual_bound;
  j["timings_ms"] = m.timings_ms;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    const auto& c = j.at("config");
    auto& cfg = m.config;
    cfg.alpha = c.at("alpha").get<double>();
    cfg.steps = c.at("steps").get<int>();
    cfg.beta = c.at("beta").get<double>();
    cfg.epsilon_self = c.at("epsilon_self").get<double>();
    cfg.temperature = c.at("c").get<double>();
    cfg.residual_tolerance = c.at("residual_tolerance").get<double>();
    cfg.mode = c.at("mode").get<std::string>();
    cfg.fusion = c.at("fusion").get<std::string>();
    cfg.affinity = c.at("affinity").get<std::string>();
    cfg.order = c.at("order").get<std::string>();
    cfg.nonneg = c.at("nonneg").get<std::string>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.upsample_h = c.at("upsample").at(0).get<int>();
    cfg.upsample_w = c.at("upsample").at(1).get<int>();
    m.input_path = j.at("input_path").get<std::string>();
    m.source_tag = j.at("source_tag").get<std::string>();
    m.grid_h = j.at("grid").at(0).get<int>();
    m.grid_w = j.at("grid").at(1).get<int>();
    m.classes = j.at("classes").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& h : j.at("heads")) {
      m.heads.push_back(HeadRecord{h.at("layer_index").get<int>(), h.at("head_index").get<int>(),
                                   h.at("entropy").get<double>(), h.at("weight").get<double>()});
    }
    m.steps_used = j.at("steps_used").get<int>();
    m.residual_bound = j.at("residual_bound").get<double>();
    m.timings_ms = j.at("timings_ms").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

namespace nrvp {

std::vector<std::uint8_t> encode(const LabelProbabilities& p, int grid_h, int grid_w) {
  if (Index(grid_h) * Index(grid_w) != p.p.rows()) {
    fail(ErrorCode::GridMismatch, "probability rows do not match the grid");
  }
  detail::ByteWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(std::uint32_t(p.p.rows()));
  w.u32(std::uint32_t(p.p.cols()));
  w.u32(std::uint32_t(grid_h));
  w.u32(std::uint32_t(grid_w));
  w.u32(std::uint32_t(p.steps_used));
  w.f64(p.residual_bound_value);
  w.f32_matrix(p.p);
  auto& buf = w.buffer();
  const std::uint32_t crc = nrvf::crc32(buf);
  w.u32(crc);
  return std::move(buf);
}

Decoded decode(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  char magic[4];
  r.copy(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) fail(ErrorCode::BadMagic, "magic is not 'NRVP'");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    fail(ErrorCode::VersionUnsupported, "version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32("rows");
  const std::uint32_t k = r.u32("classes");
  const std::uint32_t gh = r.u32("grid_h");
  const std::uint32_t gw = r.u32("grid_w");
  const std::uint32_t steps = r.u32("steps_used");
  const double bound = r.f64("residual_bound");
  if (n == 0 || n > nrvf::kMaxNodes || k == 0 || k > nrvf::kMaxClasses ||
      std::uint64_t(gh) * gw != n) {
    fail(ErrorCode::InconsistentHeader, "NRVP shape fields are inconsistent");
  }
  if (std::uint64_t(n) * k * 4 + 4 != r.remaining()) {
    fail(ErrorCode::CorruptPayload, "NRVP size does not match its header");
  }
  const std::size_t body_end = bytes.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body_end, sizeof stored_crc);
  if (nrvf::crc32(bytes.first(body_end)) != stored_crc) {
    fail(ErrorCode::CorruptPayload, "CRC-32 mismatch");
  }
  Decoded out;
  out.grid_h = int(gh);
  out.grid_w = int(gw);
  out.probabilities.p = r.f32_matrix(Index(n), Index(k), "probabilities");
  out.probabilities.steps_used = int(steps);
  out.probabilities.residual_bound_value = bound;
  return out;
}

}  // namespace nrvp

std::vector<std::uint8_t> encode_pgm(const ClassMask& mask) {
  std::ostringstream header;
  header << "P5\n" << mask.grid_w << " " << mask.grid_h << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(out.size() + mask.labels.size());
  for (std::uint32_t label : mask.labels) {
    if (label > 255) fail(ErrorCode::InvalidArgument, "class index exceeds 8-bit graymap range");
    out.push_back(std::uint8_t(label));
  }
  return out;
}

ClassMask decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(char(bytes[pos++]));
    return t;
  };
  if (token() != "P5") fail(ErrorCode::BadMagic, "not a binary graymap");
  ClassMask mask;
  int maxval = 0;
  try {
    mask.grid_w = std::stoi(token());
    mask.grid_h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    fail(ErrorCode::CorruptPayload, "malformed graymap header");
  }
  ++pos;  // single whitespace after maxval
  if (mask.grid_w < 1 || mask.grid_h < 1 || maxval < 1 || maxval > 255) {
    fail(ErrorCode::InconsistentHeader, "unsupported graymap geometry");
  }
  const std::size_t count = std::size_t(mask.grid_w) * std::size_t(mask.grid_h);
  if (pos > bytes.size() || bytes.size() - pos != count) {
    fail(ErrorCode::CorruptPayload, "graymap pixel count does not match its header");
  }
  mask.labels.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.end());
  return mask;
}

OutputPaths save_outputs(const LabelProbabilities& probs, const ClassMask& mask,
                         const RunManifest& manifest, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());
  OutputPaths paths{out_dir / "mask.pgm", out_dir / "probabilities.nrvp", out_dir / "manifest.json"};
  nrvf::write_file(paths.mask, encode_pgm(mask));
  nrvf::write_file(paths.probabilities, nrvp::encode(probs, manifest.grid_h, manifest.grid_w));
  const std::string text = manifest_to_json(manifest);
  nrvf::write_file(paths.manifest,
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return paths;
}

}  // namespace rwseg
