#include "taper/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace taper {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

void Checkpoint::load_into(const ParameterRefs& params) const {
  if (params.size() != tensors.size()) {
    throw std::invalid_argument("checkpoint '" + section + "' holds " + std::to_string(tensors.size()) +
                                " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != names[i] || params[i]->value.shape() != tensors[i].shape()) {
      throw std::invalid_argument("checkpoint parameter " + names[i] + " " + shape_string(tensors[i].shape()) +
                                  " does not match model parameter " + params[i]->name + " " +
                                  shape_string(params[i]->value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = tensors[i];
    params[i]->grad = Tensor(tensors[i].shape());
  }
}

std::string encode_checkpoint(const std::string& section, const std::string& vocab_hash, const nlohmann::json& config,
                              const ParameterRefs& params, const nlohmann::json& extra) {
  nlohmann::json header;
  header["section"] = section;
  header["vocab_hash"] = vocab_hash;
  header["config"] = config;
  header["extra"] = extra;
  header["params"] = nlohmann::json::array();
  for (const Parameter* p : params) header["params"].push_back({{"name", p->name}, {"shape", p->value.shape()}});
  const std::string text = header.dump();

  std::string out(Checkpoint::kMagic, 8);
  put_u16(out, Checkpoint::kVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const Parameter* p : params) {
    for (double v : p->value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 14 || bytes.compare(0, 8, Checkpoint::kMagic) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  const std::uint16_t version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[8]) |
                                                           (static_cast<unsigned char>(bytes[9]) << 8));
  if (version != Checkpoint::kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes, 10);
  if (14 + static_cast<std::size_t>(header_len) > bytes.size()) throw std::runtime_error("truncated checkpoint header");
  const auto header = nlohmann::json::parse(bytes.substr(14, header_len));

  Checkpoint ck;
  ck.section = header.at("section").get<std::string>();
  ck.vocab_hash = header.at("vocab_hash").get<std::string>();
  ck.config = header.at("config");
  ck.extra = header.value("extra", nlohmann::json::object());
  std::size_t at = 14 + header_len;
  for (const auto& entry : header.at("params")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t n = shape_numel(shape);
    if (at + 4 * n > bytes.size()) throw std::runtime_error("truncated checkpoint payload");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i, at += 4) values[i] = std::bit_cast<float>(get_u32(bytes, at));
    ck.names.push_back(entry.at("name").get<std::string>());
    ck.tensors.emplace_back(std::move(shape), std::move(values));
  }
  if (at != bytes.size()) throw std::runtime_error("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& section, const std::string& vocab_hash,
                     const nlohmann::json& config, const ParameterRefs& params, const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(section, vocab_hash, config, params, extra);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_section,
                           const std::string& expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Checkpoint ck = decode_checkpoint(buf.str());
  if (ck.section != expected_section) {
    throw std::invalid_argument(path.string() + ": expected section '" + expected_section + "', found '" + ck.section + "'");
  }
  if (!expected_vocab_hash.empty() && ck.vocab_hash != expected_vocab_hash) {
    throw std::invalid_argument(path.string() + ": vocabulary hash mismatch (checkpoint " + ck.vocab_hash +
                             ", current vocabulary " + expected_vocab_hash + ")");
  }
  return ck;
}

}  // namespace taper
