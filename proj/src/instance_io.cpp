// plume-qap-v1: JSON Lines. A header record
//   {"format":"plume-qap-v1","count":N,"base_seed":S}
// followed by one record per instance
//   {"n":..,"p":..,"seed":..,"coords":[[x,y],..],"flow_upper":[f01,f02,..]}
// with the strict upper triangle of F in row-major order. Distances are
// recomputed on load.

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "plume/errors.hpp"
#include "plume/qap.hpp"

namespace plume {

namespace {

constexpr const char* kInstanceFormat = "plume-qap-v1";

nlohmann::json instance_to_json(const QapInstance& inst) {
  nlohmann::json coords = nlohmann::json::array();
  for (std::size_t i = 0; i < inst.n; ++i) coords.push_back({inst.coords(i, 0), inst.coords(i, 1)});
  std::vector<double> upper;
  upper.reserve(inst.n * (inst.n - 1) / 2);
  for (std::size_t i = 0; i < inst.n; ++i)
    for (std::size_t j = i + 1; j < inst.n; ++j) upper.push_back(inst.flow(i, j));
  nlohmann::json j;
  j["n"] = inst.n;
  j["p"] = inst.density;
  j["seed"] = inst.seed;
  j["coords"] = std::move(coords);
  j["flow_upper"] = std::move(upper);
  return j;
}

QapInstance instance_from_json(const nlohmann::json& j, std::size_t line) {
  try {
    const auto n = j.at("n").get<std::size_t>();
    const auto& coords = j.at("coords");
    const auto& upper = j.at("flow_upper");
    if (coords.size() != n) throw ParseError("coords has " + std::to_string(coords.size()) +
                                                 " rows, expected " + std::to_string(n), line);
    if (upper.size() != n * (n - 1) / 2)
      throw ParseError("flow_upper has wrong length", line);
    Matrix x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      if (coords[i].size() != 2) throw ParseError("coordinate row must have 2 entries", line);
      x(i, 0) = coords[i][0].get<double>();
      x(i, 1) = coords[i][1].get<double>();
    }
    Matrix f(n, n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t jj = i + 1; jj < n; ++jj) {
        const double v = upper[k++].get<double>();
        if (v < 0.0) throw ParseError("negative flow entry", line);
        f(i, jj) = v;
        f(jj, i) = v;
      }
    }
    return QapInstance::from_parts(std::move(f), std::move(x), j.at("p").get<double>(),
                                   j.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what(), line);
  }
}

}  // namespace

void write_instances(const InstanceSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  nlohmann::json header;
  header["format"] = kInstanceFormat;
  header["count"] = set.instances.size();
  header["base_seed"] = set.meta.base_seed;
  out << header.dump() << '\n';
  for (const auto& inst : set.instances) out << instance_to_json(inst).dump() << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

InstanceSet read_instances(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  InstanceSet set;
  std::string text;
  std::size_t line = 0;
  std::size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (!have_header) {
      try {
        if (j.at("format").get<std::string>() != kInstanceFormat)
          throw ParseError("unknown format '" + j.at("format").get<std::string>() + "'", line);
        expected = j.at("count").get<std::size_t>();
        set.meta.base_seed = j.at("base_seed").get<std::uint64_t>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad header: ") + e.what(), line);
      }
      have_header = true;
      continue;
    }
    set.instances.push_back(instance_from_json(j, line));
  }
  if (!have_header) throw ParseError("missing plume-qap-v1 header", line == 0 ? 1 : line);
  if (set.instances.size() != expected)
    throw ParseError("header declares " + std::to_string(expected) + " instances, found " +
                         std::to_string(set.instances.size()),
                     line);
  set.meta.count = set.instances.size();
  if (!set.instances.empty()) {
    set.meta.n = set.instances.front().n;
    set.meta.p = set.instances.front().density;
  }
  return set;
}

}  // namespace plume
