#include "uwe/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace uwe {

namespace {

constexpr char kMagic[8] = {'U', 'W', 'E', 'C', 'K', 'P', 'T', '\0'};

std::string where(const std::filesystem::path& p) {
  return "checkpoint " + p.string() + " (format v" + std::to_string(kCheckpointVersion) + "): ";
}

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated file");
  return v;
}

template <typename Scalar>
void put_tensor(std::ostream& os, const std::string& name, const Matrix<Scalar>& m) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
}

template <typename Scalar>
void get_tensor(std::istream& is, const std::string& expected_name, Matrix<Scalar>& m) {
  const auto len = get<std::uint32_t>(is);
  if (len > 4096) throw std::runtime_error("corrupt tensor name");
  std::string name(len, '\0');
  is.read(name.data(), len);
  const auto rows = get<std::uint64_t>(is);
  const auto cols = get<std::uint64_t>(is);
  if (!expected_name.empty() && name != expected_name) {
    throw std::runtime_error("tensor '" + name + "' found where '" + expected_name + "' was expected");
  }
  if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
    std::ostringstream os;
    os << "tensor '" << name << "' is " << rows << "x" << cols << ", model expects " << m.rows() << "x" << m.cols();
    throw std::runtime_error(os.str());
  }
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
  if (!is) throw std::runtime_error("truncated tensor '" + name + "'");
}

nlohmann::json meta_json(const CheckpointMeta& m, long long adam_steps) {
  return {{"intervals", m.network.intervals},
          {"rgb_width", m.network.rgb_width},
          {"hsv_width", m.network.hsv_width},
          {"attention_width", m.network.attention_width},
          {"variant", to_string(m.network.variant)},
          {"epoch", m.epoch},
          {"step", m.step},
          {"seed", m.seed},
          {"tag", m.tag},
          {"adam_steps", adam_steps}};
}

struct Header {
  CheckpointMeta meta;
  long long adam_steps = 0;
  std::uint32_t scalar_bytes = 0;
};

Header read_header(std::istream& is, const std::filesystem::path& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError(where(path) + "not a checkpoint file");
  Header h;
  try {
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
      throw CheckpointError(where(path) + "file has format v" + std::to_string(version) + ", this build reads v" +
                            std::to_string(kCheckpointVersion));
    }
    h.scalar_bytes = get<std::uint32_t>(is);
    const auto n = get<std::uint64_t>(is);
    if (n > (1u << 20)) throw std::runtime_error("corrupt metadata length");
    std::string text(n, '\0');
    is.read(text.data(), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("truncated metadata");
    const auto j = nlohmann::json::parse(text);
    h.meta.network.intervals = j.at("intervals").get<int>();
    h.meta.network.rgb_width = j.at("rgb_width").get<int>();
    h.meta.network.hsv_width = j.at("hsv_width").get<int>();
    h.meta.network.attention_width = j.at("attention_width").get<int>();
    h.meta.network.variant = parse_variant(j.at("variant").get<std::string>());
    h.meta.epoch = j.at("epoch").get<int>();
    h.meta.step = j.at("step").get<long long>();
    h.meta.seed = j.at("seed").get<std::uint64_t>();
    h.meta.tag = j.at("tag").get<std::string>();
    h.adam_steps = j.at("adam_steps").get<long long>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(where(path) + e.what());
  }
  return h;
}

}  // namespace

std::string network_mismatch(const NetworkConfig& a, const NetworkConfig& b) {
  std::ostringstream os;
  auto cmp = [&os](const char* key, auto x, auto y) {
    if (x != y) os << (os.tellp() > 0 ? "; " : "") << key << " " << x << " vs " << y;
  };
  cmp("intervals", a.intervals, b.intervals);
  cmp("rgb_width", a.rgb_width, b.rgb_width);
  cmp("hsv_width", a.hsv_width, b.hsv_width);
  cmp("attention_width", a.attention_width, b.attention_width);
  cmp("variant", to_string(a.variant), to_string(b.variant));
  return os.str();
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, Model<Scalar>& model, const Adam<Scalar>* optimizer,
                     const CheckpointMeta& meta_in) {
  CheckpointMeta meta = meta_in;
  meta.network = model.config();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError(where(path) + "cannot open for writing");
    os.write(kMagic, 8);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, sizeof(Scalar));
    const std::string text = meta_json(meta, optimizer ? optimizer->steps() : 0).dump();
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));

    const auto list = model.parameters();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(list.params.size()));
    for (const auto* p : list.params) put_tensor(os, p->name, p->value);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(list.buffers.size()));
    for (const auto& b : list.buffers) put_tensor(os, b.name, *b.value);

    const std::size_t moments = optimizer ? optimizer->first_moments().size() : 0;
    put<std::uint32_t>(os, static_cast<std::uint32_t>(moments));
    for (std::size_t i = 0; i < moments; ++i) put_tensor(os, list.params[i]->name, optimizer->first_moments()[i]);
    for (std::size_t i = 0; i < moments; ++i) put_tensor(os, list.params[i]->name, optimizer->second_moments()[i]);
    os.flush();
    if (!os) throw CheckpointError(where(path) + "write failed (disk full?)");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(where(path) + "cannot open");
  return read_header(is, path).meta;
}

template <typename Scalar>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model<Scalar>& model, Adam<Scalar>* optimizer) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(where(path) + "cannot open");
  const Header h = read_header(is, path);
  const std::string diff = network_mismatch(model.config(), h.meta.network);
  if (!diff.empty()) throw CheckpointError(where(path) + "configuration mismatch (model vs file): " + diff);
  if (h.scalar_bytes != sizeof(Scalar)) {
    throw CheckpointError(where(path) + "stored with " + std::to_string(h.scalar_bytes) + "-byte scalars, model uses " +
                          std::to_string(sizeof(Scalar)));
  }
  try {
    const auto list = model.parameters();
    if (get<std::uint32_t>(is) != list.params.size()) throw std::runtime_error("parameter count differs");
    for (auto* p : list.params) get_tensor(is, p->name, p->value);
    if (get<std::uint32_t>(is) != list.buffers.size()) throw std::runtime_error("buffer count differs");
    for (const auto& b : list.buffers) get_tensor(is, b.name, *b.value);
    const auto moments = get<std::uint32_t>(is);
    if (optimizer && moments > 0) {
      if (moments != list.params.size()) throw std::runtime_error("optimiser state count differs");
      auto& first = optimizer->first_moments();
      auto& second = optimizer->second_moments();
      first.clear();
      second.clear();
      for (const auto* p : list.params) {
        first.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
        second.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      }
      for (std::size_t i = 0; i < moments; ++i) get_tensor(is, list.params[i]->name, first[i]);
      for (std::size_t i = 0; i < moments; ++i) get_tensor(is, list.params[i]->name, second[i]);
      optimizer->set_steps(h.adam_steps);
    }
    for (auto* p : list.params) p->zero_grad();
  } catch (const std::exception& e) {
    throw CheckpointError(where(path) + e.what());
  }
  return h.meta;
}

template void save_checkpoint<float>(const std::filesystem::path&, Model<float>&, const Adam<float>*,
                                     const CheckpointMeta&);
template void save_checkpoint<double>(const std::filesystem::path&, Model<double>&, const Adam<double>*,
                                      const CheckpointMeta&);
template CheckpointMeta load_checkpoint<float>(const std::filesystem::path&, Model<float>&, Adam<float>*);
template CheckpointMeta load_checkpoint<double>(const std::filesystem::path&, Model<double>&, Adam<double>*);

}  // namespace uwe
