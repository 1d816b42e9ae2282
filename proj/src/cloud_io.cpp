#include <charconv>
#include <fstream>
#include <sstream>

#include "dloc/mapstore.hpp"

namespace dloc::mapstore {

namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_num(const std::string& tok, const std::string& path, int line) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(path, line, "expected a number, got '" + tok + "'");
  }
}

}  // namespace

RawCloud load_ply(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  int lineno = 0;
  auto next = [&]() -> bool {
    ++lineno;
    return bool(std::getline(is, line));
  };
  if (!next() || line != "ply") fail(path, lineno, "missing 'ply' header");

  size_t vertex_count = 0;
  std::vector<std::string> props;
  bool in_vertex = false, ascii = false;
  while (next()) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      ascii = toks.size() >= 2 && toks[1] == "ascii";
      if (!ascii) fail(path, lineno, "only ASCII PLY is supported");
    } else if (toks[0] == "element") {
      in_vertex = toks.size() >= 3 && toks[1] == "vertex";
      if (in_vertex) vertex_count = std::stoull(toks[2]);
    } else if (toks[0] == "property" && in_vertex) {
      if (toks.size() >= 3) props.push_back(toks.back());
    } else if (toks[0] == "end_header") {
      break;
    }
  }
  int ix = -1, iy = -1, iz = -1, ii = -1;
  for (size_t i = 0; i < props.size(); ++i) {
    if (props[i] == "x") ix = int(i);
    if (props[i] == "y") iy = int(i);
    if (props[i] == "z") iz = int(i);
    if (props[i] == "intensity") ii = int(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail(path, lineno, "vertex element lacks x/y/z properties");

  RawCloud cloud;
  cloud.points.reserve(vertex_count);
  for (size_t n = 0; n < vertex_count; ++n) {
    if (!next()) fail(path, lineno, "unexpected end of file in vertex data");
    auto toks = split_ws(line);
    if (toks.size() < props.size()) fail(path, lineno, "short vertex row");
    Vec3 p(parse_num(toks[ix], path, lineno), parse_num(toks[iy], path, lineno),
           parse_num(toks[iz], path, lineno));
    if (!p.allFinite()) fail(path, lineno, "non-finite coordinate");
    cloud.points.push_back(p);
    if (ii >= 0) cloud.intensity.push_back(float(parse_num(toks[ii], path, lineno)));
  }
  return cloud;
}

RawCloud load_pcd(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  int lineno = 0;
  size_t count = 0;
  bool data_ascii = false;
  int ix = -1, iy = -1, iz = -1;
  int nfields = 0;
  while (++lineno, std::getline(is, line)) {
    auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks[0] == "FIELDS") {
      nfields = int(toks.size()) - 1;
      for (int i = 1; i < int(toks.size()); ++i) {
        if (toks[i] == "x") ix = i - 1;
        if (toks[i] == "y") iy = i - 1;
        if (toks[i] == "z") iz = i - 1;
      }
    } else if (toks[0] == "POINTS") {
      count = std::stoull(toks[1]);
    } else if (toks[0] == "DATA") {
      data_ascii = toks.size() >= 2 && toks[1] == "ascii";
      if (!data_ascii) fail(path, lineno, "only DATA ascii is supported");
      break;
    }
  }
  if (ix < 0 || iy < 0 || iz < 0) fail(path, lineno, "FIELDS must include x y z");

  RawCloud cloud;
  cloud.points.reserve(count);
  for (size_t n = 0; n < count; ++n) {
    if (!(++lineno, std::getline(is, line))) fail(path, lineno, "unexpected end of file");
    auto toks = split_ws(line);
    if (int(toks.size()) < nfields) fail(path, lineno, "short point row");
    Vec3 p(parse_num(toks[ix], path, lineno), parse_num(toks[iy], path, lineno),
           parse_num(toks[iz], path, lineno));
    if (!p.allFinite()) fail(path, lineno, "non-finite coordinate");
    cloud.points.push_back(p);
  }
  return cloud;
}

RawCloud load_cloud(const std::string& path) {
  if (path.size() >= 4) {
    std::string ext = path.substr(path.size() - 4);
    for (char& c : ext) c = char(std::tolower(c));
    if (ext == ".ply") return load_ply(path);
    if (ext == ".pcd") return load_pcd(path);
  }
  throw std::runtime_error("unsupported cloud format (expected .ply or .pcd): " + path);
}

}  // namespace dloc::mapstore
