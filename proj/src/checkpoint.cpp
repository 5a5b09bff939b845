#include "simt/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes host scalars verbatim and is specified little-endian");

namespace simt {

namespace {

void write_bytes(std::ostream& out, const void* data, size_t len) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

template <typename T>
void write_int(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  write_bytes(out, bytes, sizeof(T));
}

template <typename T>
T read_int(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

std::string read_string(std::istream& in, size_t len) {
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

nlohmann::json metadata_json(const ModelConfig& config, const Vocabulary& src_vocab,
                             const Vocabulary& tgt_vocab, const std::string& config_hash,
                             uint64_t seed) {
  nlohmann::json meta;
  meta["model"] = model_config_to_json(config);
  meta["src_vocab"] = src_vocab.tokens();
  meta["tgt_vocab"] = tgt_vocab.tokens();
  meta["config_hash"] = config_hash;
  meta["seed"] = seed;
  return meta;
}

struct Header {
  CheckpointInfo info;
  // stream positioned at the tensor count after parsing
};

Header read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint " + path + ": bad magic bytes");
  }
  Header h;
  h.info.version = read_int<uint32_t>(in);
  if (h.info.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                             std::to_string(h.info.version));
  }
  h.info.scalar_width = static_cast<int>(read_int<uint32_t>(in));
  if (h.info.scalar_width != 4 && h.info.scalar_width != 8) {
    throw std::runtime_error("checkpoint " + path + ": unsupported scalar width");
  }
  const uint64_t meta_len = read_int<uint64_t>(in);
  const std::string meta_text = read_string(in, meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path + ": bad metadata: " + e.what());
  }
  h.info.config = model_config_from_json(meta.at("model"));
  h.info.src_vocab = Vocabulary::from_tokens(meta.at("src_vocab").get<std::vector<std::string>>());
  h.info.tgt_vocab = Vocabulary::from_tokens(meta.at("tgt_vocab").get<std::vector<std::string>>());
  h.info.config_hash = meta.value("config_hash", std::string());
  h.info.seed = meta.value("seed", uint64_t(0));
  return h;
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& config) {
  return nlohmann::json{{"src_vocab", config.src_vocab},
                        {"tgt_vocab", config.tgt_vocab},
                        {"d_model", config.d_model},
                        {"n_heads", config.n_heads},
                        {"d_ff", config.d_ff},
                        {"enc_layers", config.enc_layers},
                        {"dec_layers", config.dec_layers},
                        {"max_len", config.max_len},
                        {"dropout", config.dropout},
                        {"label_smoothing", config.label_smoothing},
                        {"init_seed", config.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig config;
  config.src_vocab = j.at("src_vocab").get<int>();
  config.tgt_vocab = j.at("tgt_vocab").get<int>();
  config.d_model = j.at("d_model").get<int>();
  config.n_heads = j.at("n_heads").get<int>();
  config.d_ff = j.at("d_ff").get<int>();
  config.enc_layers = j.at("enc_layers").get<int>();
  config.dec_layers = j.at("dec_layers").get<int>();
  config.max_len = j.at("max_len").get<int>();
  config.dropout = j.at("dropout").get<double>();
  config.label_smoothing = j.at("label_smoothing").get<double>();
  config.init_seed = j.at("init_seed").get<uint64_t>();
  config.validate();
  return config;
}

template <typename S>
void save_checkpoint(const std::string& path, const ModelParams<S>& params,
                     const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                     const std::string& config_hash, uint64_t seed) {
  if (src_vocab.size() != params.config.src_vocab || tgt_vocab.size() != params.config.tgt_vocab) {
    throw std::invalid_argument("save_checkpoint: vocabulary sizes disagree with the config");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  write_bytes(out, kCheckpointMagic, 8);
  write_int<uint32_t>(out, kCheckpointVersion);
  write_int<uint32_t>(out, static_cast<uint32_t>(sizeof(S)));
  const std::string meta =
      metadata_json(params.config, src_vocab, tgt_vocab, config_hash, seed).dump();
  write_int<uint64_t>(out, meta.size());
  write_bytes(out, meta.data(), meta.size());

  uint32_t count = 0;
  params.for_each_parameter([&](const std::string&, const Matrix<S>&) { ++count; });
  write_int<uint32_t>(out, count);
  params.for_each_parameter([&](const std::string& name, const Matrix<S>& m) {
    write_int<uint16_t>(out, static_cast<uint16_t>(name.size()));
    write_bytes(out, name.data(), name.size());
    write_int<uint32_t>(out, static_cast<uint32_t>(m.rows()));
    write_int<uint32_t>(out, static_cast<uint32_t>(m.cols()));
    write_bytes(out, m.data(), m.size() * sizeof(S));
  });
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_header(in, path).info;
}

template <typename S>
CheckpointInfo load_checkpoint(const std::string& path, ModelParams<S>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  const Header h = read_header(in, path);
  if (h.info.scalar_width != static_cast<int>(sizeof(S))) {
    throw std::runtime_error("checkpoint " + path + ": stores " +
                             std::to_string(8 * h.info.scalar_width) +
                             "-bit scalars, requested " + std::to_string(8 * sizeof(S)) + "-bit");
  }
  params = make_params_shell<S>(h.info.config);
  const uint32_t count = read_int<uint32_t>(in);
  uint32_t expected = 0;
  params.for_each_parameter([&](const std::string&, const Matrix<S>&) { ++expected; });
  if (count != expected) {
    throw std::runtime_error("checkpoint " + path + ": tensor count mismatch");
  }
  params.for_each_parameter([&](const std::string& name, Matrix<S>& m) {
    const uint16_t name_len = read_int<uint16_t>(in);
    const std::string stored = read_string(in, name_len);
    if (stored != name) {
      throw std::runtime_error("checkpoint " + path + ": expected tensor '" + name + "', found '" +
                               stored + "'");
    }
    const uint32_t rows = read_int<uint32_t>(in);
    const uint32_t cols = read_int<uint32_t>(in);
    if (rows != static_cast<uint32_t>(m.rows()) || cols != static_cast<uint32_t>(m.cols())) {
      throw std::runtime_error("checkpoint " + path + ": tensor '" + name + "' has shape " +
                               std::to_string(rows) + "x" + std::to_string(cols) +
                               ", config implies " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()));
    }
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(S)));
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated tensor '" + name + "'");
  });
  return h.info;
}

std::string describe_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  const Header h = read_header(in, path);
  std::ostringstream out;
  out << "format version " << h.info.version << ", " << 8 * h.info.scalar_width
      << "-bit scalars\n";
  out << "model: d_model=" << h.info.config.d_model << " heads=" << h.info.config.n_heads
      << " d_ff=" << h.info.config.d_ff << " layers=" << h.info.config.enc_layers << "+"
      << h.info.config.dec_layers << " vocab=" << h.info.config.src_vocab << "/"
      << h.info.config.tgt_vocab << "\n";
  if (!h.info.config_hash.empty()) {
    out << "config: " << h.info.config_hash << " seed: " << h.info.seed << "\n";
  }
  const uint32_t count = read_int<uint32_t>(in);
  long total = 0;
  for (uint32_t t = 0; t < count; ++t) {
    const uint16_t name_len = read_int<uint16_t>(in);
    const std::string name = read_string(in, name_len);
    const uint32_t rows = read_int<uint32_t>(in);
    const uint32_t cols = read_int<uint32_t>(in);
    const size_t n = static_cast<size_t>(rows) * cols;
    double sq = 0.0;
    if (h.info.scalar_width == 4) {
      std::vector<float> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
      for (float v : buf) sq += static_cast<double>(v) * v;
    } else {
      std::vector<double> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 8));
      for (double v : buf) sq += v * v;
    }
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated tensor '" + name + "'");
    total += static_cast<long>(n);
    char norm[32];
    std::snprintf(norm, sizeof(norm), "%.8g", std::sqrt(sq));
    out << name << "  " << rows << "x" << cols << "  l2=" << norm << "\n";
  }
  out << "total parameters: " << total << "\n";
  return out.str();
}

template void save_checkpoint<float>(const std::string&, const ModelParams<float>&,
                                     const Vocabulary&, const Vocabulary&, const std::string&,
                                     uint64_t);
template void save_checkpoint<double>(const std::string&, const ModelParams<double>&,
                                      const Vocabulary&, const Vocabulary&, const std::string&,
                                      uint64_t);
template CheckpointInfo load_checkpoint<float>(const std::string&, ModelParams<float>&);
template CheckpointInfo load_checkpoint<double>(const std::string&, ModelParams<double>&);

}  // namespace simt
