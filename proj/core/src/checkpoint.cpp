#include "weatherseg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "weatherseg/error.hpp"

namespace weatherseg::ckpt {
namespace {

constexpr char kMagic[8] = {'W', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

template <class T>
std::string dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

template <class U>
void put_le(std::ostream& os, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  os.write(b, sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
  char b[sizeof(U)];
  is.read(b, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  U v;
  std::memcpy(&v, b, sizeof(U));
  return v;
}

template <class T>
void put_array(std::ostream& os, const nn::Mat<T>& m) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_le(os, m.data()[i]);
  }
}

template <class T>
void get_array(std::istream& is, nn::Mat<T>& m) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<T>(is);
  }
}

struct Opened {
  std::ifstream in;
  config::Json header;
};

Opened open(const std::filesystem::path& path) {
  Opened o;
  const std::string where = path.string();
  o.in.open(path, std::ios::binary);
  if (!o.in) throw DataError("", "cannot open checkpoint " + where);
  char magic[8];
  o.in.read(magic, 8);
  if (!o.in || std::memcmp(magic, kMagic, 8) != 0) throw DataError("", where + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(o.in);
  if (version != kFormatVersion)
    throw DataError("", where + ": unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(o.in);
  if (!o.in || len > (1ULL << 30)) throw DataError("", where + ": corrupt header length");
  std::string text(len, '\0');
  o.in.read(text.data(), static_cast<std::streamsize>(len));
  if (!o.in) throw DataError("", where + ": truncated header");
  try {
    o.header = config::Json::parse(text);
  } catch (const config::Json::exception& e) {
    throw DataError("", where + ": malformed header: " + e.what());
  }
  return o;
}

}  // namespace

template <class T>
void save(const std::filesystem::path& path, seg::SegNet<T>& net, train::Optimizer<T>* optimizer,
          const config::Json& meta) {
  const auto params = net.params();
  config::Json tensors = config::Json::array();
  std::uint64_t offset = 0;
  auto entry = [&](const std::string& name, const nn::Mat<T>& m) {
    config::Json e = {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}};
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(T);
    return e;
  };
  for (const auto* p : params) tensors.push_back(entry(p->name, p->value));
  config::Json header = {{"dtype", dtype_name<T>()}, {"meta", meta}, {"tensors", tensors}};
  if (optimizer) {
    config::Json first = config::Json::array(), second = config::Json::array();
    // Offsets follow payload order: every first moment, then every second.
    for (std::size_t i = 0; i < params.size(); ++i)
      first.push_back(entry(params[i]->name, optimizer->first_moments()[i]));
    for (std::size_t i = 0; i < params.size(); ++i)
      second.push_back(entry(params[i]->name, optimizer->second_moments()[i]));
    header["optimizer"] = {{"kind", std::string(train::to_string(optimizer->config().kind))},
                           {"steps", optimizer->steps()},
                           {"first", first},
                           {"second", second}};
  }
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("", "cannot write checkpoint " + tmp.string());
    os.write(kMagic, 8);
    put_le<std::uint32_t>(os, kFormatVersion);
    put_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* p : params) put_array(os, p->value);
    if (optimizer) {
      for (const auto& m : optimizer->first_moments()) put_array(os, m);
      for (const auto& m : optimizer->second_moments()) put_array(os, m);
    }
    if (!os) throw DataError("", "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

config::Json read_header(const std::filesystem::path& path) { return open(path).header; }

template <class T>
config::Json load(const std::filesystem::path& path, seg::SegNet<T>& net,
                  train::Optimizer<T>* optimizer) {
  Opened o = open(path);
  const std::string where = path.string();
  const config::Json& h = o.header;
  try {
    if (h.at("dtype") != dtype_name<T>())
      throw DataError("", where + ": stored dtype " + h.at("dtype").get<std::string>() +
                              " does not match " + dtype_name<T>());
    const auto params = net.params();
    const auto& tensors = h.at("tensors");
    if (tensors.size() != params.size())
      throw DataError("", where + ": " + std::to_string(tensors.size()) + " tensors stored, model has " +
                              std::to_string(params.size()));
    const std::streamoff base = o.in.tellg();
    auto read_into = [&](const config::Json& e, const std::string& name, nn::Mat<T>& m) {
      if (e.at("name") != name || e.at("rows").get<Eigen::Index>() != m.rows() ||
          e.at("cols").get<Eigen::Index>() != m.cols())
        throw DataError("", where + ": tensor '" + e.at("name").get<std::string>() +
                                "' does not match model tensor '" + name + "'");
      o.in.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
      get_array(o.in, m);
      if (!o.in) throw DataError("", where + ": truncated payload at '" + name + "'");
    };
    for (std::size_t i = 0; i < params.size(); ++i) read_into(tensors[i], params[i]->name, params[i]->value);
    if (optimizer) {
      auto it = h.find("optimizer");
      if (it == h.end()) throw DataError("", where + ": no optimizer state stored");
      if (it->at("kind") != train::to_string(optimizer->config().kind))
        throw DataError("", where + ": optimizer kind differs from the configured one");
      for (std::size_t i = 0; i < params.size(); ++i) {
        read_into(it->at("first")[i], params[i]->name, optimizer->first_moments()[i]);
        if (optimizer->config().kind == train::OptimizerKind::kAdamW)
          read_into(it->at("second")[i], params[i]->name, optimizer->second_moments()[i]);
      }
      optimizer->set_steps(it->at("steps").get<long long>());
    }
    return h.value("meta", config::Json::object());
  } catch (const config::Json::exception& e) {
    throw DataError("", where + ": malformed header: " + e.what());
  }
}

template void save<float>(const std::filesystem::path&, seg::SegNet<float>&,
                          train::Optimizer<float>*, const config::Json&);
template void save<double>(const std::filesystem::path&, seg::SegNet<double>&,
                           train::Optimizer<double>*, const config::Json&);
template config::Json load<float>(const std::filesystem::path&, seg::SegNet<float>&,
                                  train::Optimizer<float>*);
template config::Json load<double>(const std::filesystem::path&, seg::SegNet<double>&,
                                   train::Optimizer<double>*);

}  // namespace weatherseg::ckpt
