#include "finecount/map_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "finecount/errors.hpp"

namespace finecount {

static_assert(std::endian::native == std::endian::little, "map records assume a little-endian host");

void write_map_record(std::ostream& os, const Tensor& map, nlohmann::json header) {
  header["h"] = map.height();
  header["w"] = map.width();
  header["c"] = map.channels();
  bool f64 = header.value("dtype", std::string("f32")) == "f64";
  os << header.dump() << '\n';
  if (f64) {
    os.write(reinterpret_cast<const char*>(map.data().data()),
             static_cast<std::streamsize>(map.size() * sizeof(double)));
  } else {
    std::vector<float> buf(map.data().begin(), map.data().end());
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw DataError("failed writing map record");
}

Tensor read_map_record(std::istream& is, nlohmann::json* header) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("map record: missing header line");
  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("map record: malformed header: ") + e.what());
  }
  if (!hdr.contains("h") || !hdr.contains("w") || !hdr.contains("c"))
    throw DataError("map record: header lacks h/w/c");
  int h = hdr["h"].get<int>(), w = hdr["w"].get<int>(), c = hdr["c"].get<int>();
  Tensor out(c, h, w);
  if (hdr.value("dtype", std::string("f32")) == "f64") {
    is.read(reinterpret_cast<char*>(out.data().data()), static_cast<std::streamsize>(out.size() * sizeof(double)));
  } else {
    std::vector<float> buf(out.size());
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    std::copy(buf.begin(), buf.end(), out.data().begin());
  }
  if (!is) throw DataError("map record: truncated payload");
  if (header) *header = std::move(hdr);
  return out;
}

void write_map(const std::filesystem::path& path, const Tensor& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_map_record(os, map);
}

Tensor read_map(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open map file " + path.string());
  return read_map_record(is);
}

}  // namespace finecount
