#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

#include "octevo/errors.hpp"
#include "octevo/model.hpp"

namespace octevo {

// Layout: two text lines (magic, architecture), then a parameter count line,
// then per parameter one text line `name ndim d0 d1 ...` followed by numel
// little-endian 32-bit floats.

void save_checkpoint(const std::string& path, const ArchConfig& cfg,
                     const ModelParams& mp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << "octevo-ckpt 1\n" << cfg.serialize() << '\n';
  const auto params = mp.all();
  out << params.size() << '\n';
  std::vector<float> buf;
  for (const auto& [name, tensor] : params) {
    out << name << ' ' << tensor->ndim();
    for (int i = 0; i < tensor->ndim(); ++i) out << ' ' << tensor->dim(i);
    out << '\n';
    buf.resize(size_t(tensor->numel()));
    for (int64_t i = 0; i < tensor->numel(); ++i)
      buf[size_t(i)] = float(tensor->data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              int64_t(buf.size()) * 4);
  }
  if (!out) throw IoError("short write to checkpoint " + path);
}

std::pair<ArchConfig, ModelParams> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line) || line != "octevo-ckpt 1")
    throw IoError("not a checkpoint file: " + path);
  if (!std::getline(in, line)) throw IoError("truncated checkpoint " + path);
  ArchConfig cfg = ArchConfig::deserialize(line);

  // the skeleton supplies the expected name/shape inventory
  ModelParams mp = init_model_params(cfg, 0);
  auto params = mp.all();

  size_t count = 0;
  if (!std::getline(in, line)) throw IoError("truncated checkpoint " + path);
  count = std::stoul(line);
  if (count != params.size())
    throw IoError("checkpoint " + path + " holds " + std::to_string(count) +
                  " parameters, expected " + std::to_string(params.size()));

  std::vector<float> buf;
  for (size_t idx = 0; idx < count; ++idx) {
    if (!std::getline(in, line)) throw IoError("truncated checkpoint " + path);
    std::istringstream is(line);
    std::string name;
    int ndim = 0;
    is >> name >> ndim;
    if (!is || ndim < 1) throw IoError("bad parameter header: " + line);
    Shape shape(ndim);
    for (auto& d : shape) is >> d;
    if (!is) throw IoError("bad parameter header: " + line);

    Tensor* target = nullptr;
    for (auto& [pname, tensor] : params)
      if (pname == name) {
        target = tensor;
        break;
      }
    if (!target) throw IoError("unknown parameter '" + name + "' in " + path);
    if (target->shape() != shape)
      throw IoError("shape mismatch for '" + name + "' in " + path +
                    ": stored " + shape_str(shape) + ", expected " +
                    shape_str(target->shape()));

    buf.resize(size_t(target->numel()));
    in.read(reinterpret_cast<char*>(buf.data()), int64_t(buf.size()) * 4);
    if (in.gcount() != int64_t(buf.size()) * 4)
      throw IoError("truncated payload for '" + name + "' in " + path);
    for (int64_t i = 0; i < target->numel(); ++i)
      target->data()[i] = Real(buf[size_t(i)]);
  }
  return {cfg, std::move(mp)};
}

}  // namespace octevo
