#include "qna/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "qna/diagnostics.hpp"

namespace qna::checkpoint {

namespace {

constexpr std::string_view kMagic = "QNACKPT\n";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint64_t get_u64(std::string_view s, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

std::string tensor_bytes(const nn::Matrix& m) {
  std::string out(static_cast<std::size_t>(m.size()) * 4, '\0');
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, m.data() + i, 4);
    for (int b = 0; b < 4; ++b)
      out[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(b)] =
          static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

}  // namespace

const nn::Matrix& Archive::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw ParseError("checkpoint has no tensor named " + name);
}

std::string serialize(const Archive& archive) {
  nlohmann::json header = archive.header;
  header["format_version"] = kFormatVersion;
  auto& index = header["tensors"] = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, m] : archive.tensors) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", payload.size()}});
    payload += tensor_bytes(m);
  }
  const std::string h = header.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  std::string out(kMagic);
  put_u64(out, h.size());
  out += h;
  out += payload;
  return out;
}

Archive deserialize(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic)
    throw ParseError("not a checkpoint archive (bad magic)");
  const std::uint64_t hlen = get_u64(bytes, kMagic.size());
  const std::size_t hstart = kMagic.size() + 8;
  if (hlen > bytes.size() - hstart) throw ParseError("checkpoint header truncated");
  Archive a;
  try {
    a.header = nlohmann::json::parse(bytes.substr(hstart, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (a.header.value("format_version", 0) != kFormatVersion)
    throw ParseError("unsupported checkpoint format version");
  const std::string_view payload = bytes.substr(hstart + hlen);
  for (const auto& t : a.header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto off = t.at("offset").get<std::size_t>();
    const auto n = static_cast<std::size_t>(rows * cols);
    if (off + n * 4 > payload.size()) throw ParseError("checkpoint tensor data truncated");
    nn::Matrix m(rows, cols);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[off + i * 4 + static_cast<std::size_t>(b)]))
                << (8 * b);
      std::memcpy(m.data() + i, &bits, 4);
    }
    a.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  a.header.erase("tensors");
  return a;
}

void save(const Archive& archive, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    const auto bytes = serialize(archive);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

nlohmann::json peek_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string head(kMagic.size() + 8, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  if (!in || head.substr(0, kMagic.size()) != kMagic) throw ParseError("not a checkpoint archive (bad magic)");
  std::string h(get_u64(head, kMagic.size()), '\0');
  in.read(h.data(), static_cast<std::streamsize>(h.size()));
  if (!in) throw ParseError("checkpoint header truncated");
  auto j = nlohmann::json::parse(h);
  j.erase("tensors");
  return j;
}

void store_params(Archive& archive, const nn::ParamList& params) {
  for (const auto& p : params) archive.tensors.emplace_back(p.name, p.tensor->value());
}

void restore_params(const Archive& archive, const nn::ParamList& params) {
  if (archive.tensors.size() != params.size())
    throw ParseError("checkpoint has " + std::to_string(archive.tensors.size()) +
                     " tensors, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, m] = archive.tensors[i];
    const auto& p = params[i];
    if (name != p.name) throw ParseError("checkpoint tensor " + name + " where " + p.name + " expected");
    if (m.rows() != p.tensor->rows() || m.cols() != p.tensor->cols())
      throw ParseError("shape mismatch for tensor " + name);
    p.tensor->mutable_value() = m;
  }
}

std::string fingerprint(const Archive& archive) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, m] : archive.tensors) {
    for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
    for (unsigned char c : tensor_bytes(m)) h = (h ^ c) * 1099511628211ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace qna::checkpoint
