#include "localbins/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace localbins {

namespace {
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw format_error("checkpoint: truncated payload");
  return v;
}
}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error("checkpoint: cannot open " + path + " for writing");
  os.write("LBK1", 4);
  for (const auto& [name, t] : store.items()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    for (std::int64_t i = 0; i < t.size(); ++i) put<double>(os, t.data()[i]);
  }
  if (!os) throw format_error("checkpoint: write failed for " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "LBK1", 4) != 0)
    throw format_error("checkpoint: bad magic in " + path);
  std::set<std::string> seen;
  while (true) {
    std::uint32_t len;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (is.eof()) break;
    if (!is) throw format_error("checkpoint: truncated payload");
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rank = get<std::uint32_t>(is);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r)
      shape.push_back(static_cast<std::int64_t>(get<std::uint64_t>(is)));
    const std::int64_t n = shape_numel(shape);
    if (!store.has(name))
      throw format_error("checkpoint: parameter '" + name + "' not present in model");
    Tensor& t = store.at(name);
    if (t.shape() != shape)
      throw format_error("checkpoint: parameter '" + name + "' shape mismatch, file " +
                         shape_str(shape) + " vs model " + shape_str(t.shape()));
    for (std::int64_t i = 0; i < n; ++i) t.data()[i] = get<double>(is);
    seen.insert(name);
  }
  for (const auto& [name, t] : store.items())
    if (!seen.count(name))
      throw format_error("checkpoint: parameter '" + name + "' missing from file");
}

}  // namespace localbins
