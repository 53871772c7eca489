#include "ctxrw/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ctxrw/error.hpp"

namespace ctxrw {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'R', 'W', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("checkpoint: truncated file");
  return v;
}

void put_matrix(std::ostream& os, const tensor::Matrix& m) {
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

tensor::Matrix get_matrix(std::istream& is, std::uint64_t rows, std::uint64_t cols) {
  tensor::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size())))
    throw Error("checkpoint: truncated array data");
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     const tensor::ParameterSet& params, const tensor::AdamState* optimizer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  const std::string text = header.dump();
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(os, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name().size()));
    os.write(p.name().data(), static_cast<std::streamsize>(p.name().size()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(p.value.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(p.value.cols()));
    put_matrix(os, p.value);
  }
  const bool has_opt = optimizer != nullptr && optimizer->m.size() == params.size();
  put<std::uint8_t>(os, has_opt ? 1 : 0);
  if (has_opt) {
    put(os, optimizer->lr);
    put(os, optimizer->beta1);
    put(os, optimizer->beta2);
    put(os, optimizer->eps);
    put<std::int64_t>(os, optimizer->step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      put_matrix(os, optimizer->m[i]);
      put_matrix(os, optimizer->v[i]);
    }
  }
  if (!os) throw Error("failed writing checkpoint: " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  CheckpointData data;
  const auto header_len = get<std::uint64_t>(is);
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) throw Error("checkpoint: truncated header");
  data.header = nlohmann::json::parse(text);
  const auto n = get<std::uint64_t>(is);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto name_len = get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw Error("checkpoint: truncated entry name");
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    shapes.emplace_back(rows, cols);
    data.arrays.emplace_back(std::move(name), get_matrix(is, rows, cols));
  }
  if (get<std::uint8_t>(is) != 0) {
    tensor::AdamState st;
    st.lr = get<double>(is);
    st.beta1 = get<double>(is);
    st.beta2 = get<double>(is);
    st.eps = get<double>(is);
    st.step = get<std::int64_t>(is);
    for (const auto& [rows, cols] : shapes) {
      st.m.push_back(get_matrix(is, rows, cols));
      st.v.push_back(get_matrix(is, rows, cols));
    }
    data.optimizer = std::move(st);
  }
  return data;
}

void restore_parameters(const CheckpointData& data, tensor::ParameterSet& params) {
  std::size_t matched = 0;
  for (const auto& [name, value] : data.arrays) {
    if (!params.contains(name)) throw Error("checkpoint has unknown parameter: " + name);
    auto& p = params.get(name);
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols())
      throw ShapeError("checkpoint parameter " + name + " has shape " + tensor::shape_str(value) +
                       ", model expects " + tensor::shape_str(p.value));
    p.value = value;
    ++matched;
  }
  if (matched != params.size()) throw Error("checkpoint is missing model parameters");
}

}  // namespace ctxrw
