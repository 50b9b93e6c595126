#include "acnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace acnet {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'N', 'T'};

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

// Bounds-checked little-endian cursor; every read names the record being
// decoded so truncation errors point at the culprit.
struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t off = 0;
  std::string context = "header";

  void need(std::size_t n) {
    if (off + n > bytes.size()) {
      throw std::runtime_error("checkpoint truncated while reading " + context);
    }
  }
  std::uint8_t u8() {
    need(1);
    return bytes[off++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
    off += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + off), n);
    off += n;
    return s;
  }
  std::vector<std::uint8_t> raw(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                                bytes.begin() + static_cast<std::ptrdiff_t>(off + n));
    off += n;
    return v;
  }
};

std::uint32_t crc_of(const std::vector<std::uint8_t>& bytes, std::size_t from, std::size_t to) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data() + from, static_cast<uInt>(to - from));
  return static_cast<std::uint32_t>(crc);
}

std::size_t dtype_size(std::uint8_t dtype) {
  if (dtype == 0) return 4;
  if (dtype == 1) return 8;
  throw std::runtime_error("checkpoint: unknown dtype code " + std::to_string(dtype));
}

TensorRecord f64_record(const std::vector<double>& values, std::vector<std::uint32_t> extents) {
  TensorRecord r;
  r.dtype = 1;
  r.extents = std::move(extents);
  r.payload.reserve(values.size() * 8);
  for (const double v : values) put_u64(r.payload, std::bit_cast<std::uint64_t>(v));
  return r;
}

std::vector<double> decode_f64(const TensorRecord& r, const std::string& name) {
  if (r.dtype != 1) {
    throw std::runtime_error("checkpoint: tensor '" + name + "' is not float64");
  }
  std::vector<double> out(r.payload.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(r.payload[8 * i + k]) << (8 * k);
    out[i] = std::bit_cast<double>(v);
  }
  return out;
}

TensorRecord text_record(const std::string& text) {
  TensorRecord r;
  r.dtype = 0;
  r.extents = {static_cast<std::uint32_t>(text.size())};
  r.payload.reserve(text.size() * 4);
  for (const char c : text) {
    put_u32(r.payload, std::bit_cast<std::uint32_t>(static_cast<float>(
                           static_cast<unsigned char>(c))));
  }
  return r;
}

std::string decode_text(const TensorRecord& r, const std::string& name) {
  if (r.dtype != 0) throw std::runtime_error("checkpoint: tensor '" + name + "' is not float32");
  std::string out;
  out.reserve(r.payload.size() / 4);
  for (std::size_t i = 0; i + 3 < r.payload.size(); i += 4) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(r.payload[i + k]) << (8 * k);
    const float f = std::bit_cast<float>(v);
    out.push_back(static_cast<char>(static_cast<unsigned char>(f)));
  }
  return out;
}

std::vector<std::uint32_t> shape_extents(const Shape& s) {
  std::vector<std::uint32_t> e;
  e.reserve(s.size());
  for (const int d : s) e.push_back(static_cast<std::uint32_t>(d));
  return e;
}

std::string extents_str(const std::vector<std::uint32_t>& e) {
  std::string s = "[";
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(e[i]);
  }
  return s + "]";
}

}  // namespace

std::vector<std::uint8_t> encode_container(
    const std::vector<std::pair<std::string, TensorRecord>>& records) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, rec] : records) {
    if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name too long");
    std::uint64_t numel = 1;
    for (const auto d : rec.extents) numel *= d;
    if (rec.payload.size() != numel * dtype_size(rec.dtype)) {
      throw std::invalid_argument("checkpoint: payload size disagrees with extents for '" + name +
                                  "'");
    }
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(rec.dtype);
    out.push_back(static_cast<std::uint8_t>(rec.extents.size()));
    for (const auto d : rec.extents) put_u32(out, d);
    out.insert(out.end(), rec.payload.begin(), rec.payload.end());
  }
  put_u32(out, crc_of(out, 4, out.size()));
  return out;
}

std::vector<std::pair<std::string, TensorRecord>> decode_container(
    const std::vector<std::uint8_t>& bytes) {
  Reader rd{bytes};
  rd.context = "magic";
  if (rd.str(4) != std::string(kMagic, 4)) {
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
  }
  rd.context = "header";
  const std::uint32_t version = rd.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = rd.u32();

  std::vector<std::pair<std::string, TensorRecord>> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    rd.context = "tensor #" + std::to_string(i) + " name";
    const std::uint16_t name_len = rd.u16();
    const std::string name = rd.str(name_len);
    rd.context = "tensor '" + name + "'";
    TensorRecord rec;
    rec.dtype = rd.u8();
    const std::uint8_t rank = rd.u8();
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank for tensor '" + name + "'");
    std::uint64_t numel = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      rec.extents.push_back(rd.u32());
      numel *= rec.extents.back();
      if (numel > (1ull << 32)) {
        throw std::runtime_error("checkpoint: implausible size for tensor '" + name + "'");
      }
    }
    rec.payload = rd.raw(numel * dtype_size(rec.dtype));
    records.emplace_back(name, std::move(rec));
  }
  rd.context = "checksum";
  const std::size_t crc_at = rd.off;
  const std::uint32_t stored = rd.u32();
  if (rd.off != bytes.size()) {
    throw std::runtime_error("checkpoint: trailing bytes after the checksum");
  }
  if (stored != crc_of(bytes, 4, crc_at)) {
    throw std::runtime_error("checkpoint: checksum mismatch (file corrupted)");
  }
  return records;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, ModelParams<double>& params,
                     const SgdState* opt, int epoch,
                     const std::array<std::uint64_t, 2>& rng_state, const NormStats& norm,
                     bool bn_ready) {
  std::vector<std::pair<std::string, TensorRecord>> records;
  records.emplace_back("meta.config", text_record(serialize_config(cfg)));
  records.emplace_back("meta.epoch", f64_record({static_cast<double>(epoch)}, {1}));
  records.emplace_back(
      "meta.rng", f64_record({std::bit_cast<double>(rng_state[0]), std::bit_cast<double>(rng_state[1])}, {2}));
  records.emplace_back(
      "meta.norm", f64_record({norm.rgb_mean[0], norm.rgb_mean[1], norm.rgb_mean[2],
                               norm.rgb_std[0], norm.rgb_std[1], norm.rgb_std[2], norm.depth_mean,
                               norm.depth_std},
                              {8}));
  records.emplace_back("meta.bn_ready", f64_record({bn_ready ? 1.0 : 0.0}, {1}));

  for_each_param<double>(params, [&](const std::string& name, Tensor<double>& t, bool) {
    const auto span = t.data();
    records.emplace_back(name, f64_record(std::vector<double>(span.begin(), span.end()),
                                          shape_extents(t.shape())));
  });
  if (opt) {
    for_each_param<double>(params, [&](const std::string& name, Tensor<double>& t, bool) {
      const auto it = opt->velocity.find(name);
      std::vector<double> v;
      if (it != opt->velocity.end()) {
        v = it->second;
        if (v.size() != static_cast<std::size_t>(t.numel())) {
          throw std::invalid_argument("checkpoint: velocity size mismatch for '" + name + "'");
        }
      } else {
        v.assign(static_cast<std::size_t>(t.numel()), 0.0);
      }
      records.emplace_back("opt." + name, f64_record(v, shape_extents(t.shape())));
    });
  }
  for_each_bn<double>(params, [&](const std::string& name, BnParams<double>& bn) {
    const int c = static_cast<int>(bn.stats.mean.size());
    records.emplace_back(name + ".rm",
                         f64_record(bn.stats.mean, {static_cast<std::uint32_t>(c)}));
    records.emplace_back(name + ".rv",
                         f64_record(bn.stats.var, {static_cast<std::uint32_t>(c)}));
  });

  const auto bytes = encode_container(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const auto records = decode_container(bytes);

  std::map<std::string, const TensorRecord*> lookup;
  for (const auto& [name, rec] : records) {
    if (!lookup.emplace(name, &rec).second) {
      throw std::runtime_error("checkpoint: duplicate tensor '" + name + "'");
    }
  }
  const auto fetch = [&](const std::string& name) -> const TensorRecord& {
    const auto it = lookup.find(name);
    if (it == lookup.end()) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    return *it->second;
  };

  LoadedCheckpoint out;
  out.cfg = parse_config_text(decode_text(fetch("meta.config"), "meta.config"));
  const auto epoch_v = decode_f64(fetch("meta.epoch"), "meta.epoch");
  out.epoch = static_cast<int>(epoch_v.at(0));
  const auto rng_v = decode_f64(fetch("meta.rng"), "meta.rng");
  out.rng_state = {std::bit_cast<std::uint64_t>(rng_v.at(0)),
                   std::bit_cast<std::uint64_t>(rng_v.at(1))};
  const auto norm_v = decode_f64(fetch("meta.norm"), "meta.norm");
  if (norm_v.size() != 8) throw std::runtime_error("checkpoint: meta.norm must hold 8 values");
  out.norm.rgb_mean = {norm_v[0], norm_v[1], norm_v[2]};
  out.norm.rgb_std = {norm_v[3], norm_v[4], norm_v[5]};
  out.norm.depth_mean = norm_v[6];
  out.norm.depth_std = norm_v[7];
  out.bn_ready = decode_f64(fetch("meta.bn_ready"), "meta.bn_ready").at(0) != 0.0;

  std::set<std::string> consumed = {"meta.config", "meta.epoch", "meta.rng", "meta.norm",
                                    "meta.bn_ready"};

  Rng scratch(0);
  out.params = init_model<double>(out.cfg.model, scratch);
  for_each_param<double>(out.params, [&](const std::string& name, Tensor<double>& t, bool) {
    const TensorRecord& rec = fetch(name);
    consumed.insert(name);
    if (rec.extents != shape_extents(t.shape())) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "' (expected " +
                               extents_str(shape_extents(t.shape())) + ", found " +
                               extents_str(rec.extents) + ")");
    }
    const auto v = decode_f64(rec, name);
    std::copy(v.begin(), v.end(), t.data().begin());
  });

  out.has_opt = false;
  for (const auto& [name, rec] : records) {
    if (name.rfind("opt.", 0) == 0) {
      out.has_opt = true;
      break;
    }
  }
  if (out.has_opt) {
    for_each_param<double>(out.params, [&](const std::string& name, Tensor<double>& t, bool) {
      const std::string key = "opt." + name;
      const TensorRecord& rec = fetch(key);
      consumed.insert(key);
      const auto v = decode_f64(rec, key);
      if (v.size() != static_cast<std::size_t>(t.numel())) {
        throw std::runtime_error("checkpoint: velocity size mismatch for '" + name + "'");
      }
      out.opt.velocity[name] = v;
    });
  }

  for_each_bn<double>(out.params, [&](const std::string& name, BnParams<double>& bn) {
    const int c = static_cast<int>(bn.gamma.numel());
    for (const bool is_mean : {true, false}) {
      const std::string key = name + (is_mean ? ".rm" : ".rv");
      const TensorRecord& rec = fetch(key);
      consumed.insert(key);
      const auto v = decode_f64(rec, key);
      if (static_cast<int>(v.size()) != c) {
        throw std::runtime_error("checkpoint: running-stat size mismatch for '" + key + "'");
      }
      (is_mean ? bn.stats.mean : bn.stats.var) = v;
    }
    bn.stats.initialized = out.bn_ready;
  });

  for (const auto& [name, rec] : records) {
    if (!consumed.count(name)) {
      throw std::runtime_error("checkpoint: unexpected tensor '" + name + "'");
    }
  }
  return out;
}

}  // namespace acnet
