#include "affdec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace affdec {

using json = nlohmann::json;

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(const unsigned char* buf) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<NamedTensor>& tensors) {
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    entries.push_back(
        {{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
    offset += t.tensor.size() * sizeof(double);
  }
  const std::string header =
      json{{"dtype", "f64le"}, {"tensors", std::move(entries)}}.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& t : tensors) {
    for (double v : t.tensor.values()) {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  unsigned char lenbuf[8];
  if (!in.read(reinterpret_cast<char*>(lenbuf), 8))
    throw std::runtime_error(path + ": truncated checkpoint header");
  const std::uint64_t header_len = get_u64(lenbuf);
  if (header_len > (1ull << 30))
    throw std::runtime_error(path + ": implausible header length");
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
    throw std::runtime_error(path + ": truncated checkpoint header");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": bad checkpoint header: " + e.what());
  }
  if (meta.value("dtype", "") != "f64le")
    throw std::runtime_error(path + ": unsupported dtype");
  std::vector<NamedTensor> out;
  for (const auto& e : meta.at("tensors")) {
    Shape shape = e.at("shape").get<Shape>();
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    const auto offset = e.at("offset").get<std::uint64_t>();
    if (offset + n * sizeof(double) > data.size())
      throw std::runtime_error(path + ": tensor " +
                               e.at("name").get<std::string>() +
                               " extends past end of file");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i)
      values[i] = std::bit_cast<double>(get_u64(data.data() + offset + 8 * i));
    out.push_back({e.at("name").get<std::string>(),
                   Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

}  // namespace affdec
