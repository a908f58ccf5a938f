#include "dpiil/dataset.h"

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dpiil {

double SpeedOf(const State2& s_t, const State2& s_next) {
  const double dx = s_next.x - s_t.x;
  const double dy = s_next.y - s_t.y;
  return dx * dx + dy * dy;
}

void WriteDatasetCsv(std::ostream& out, const Dataset& data,
                     const std::map<std::string, std::string>& meta) {
  out << "# dpiil-dataset schema_version=1\n";
  for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
  out << "x,y,ax,ay,v_star\n";
  out << std::setprecision(17);
  for (const DemoSample& d : data) {
    out << d.s.x << ',' << d.s.y << ',' << d.a_star.vx << ',' << d.a_star.vy << ','
        << d.v_star << '\n';
  }
}

Dataset ReadDatasetCsv(std::istream& in, std::map<std::string, std::string>* meta) {
  Dataset data;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (meta != nullptr && eq != std::string::npos && line.rfind("# dpiil-dataset", 0) != 0) {
        (*meta)[line.substr(2, eq - 2)] = line.substr(eq + 1);
      }
      continue;
    }
    if (!header) {
      if (line != "x,y,ax,ay,v_star") {
        throw std::runtime_error("dataset: unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    std::istringstream ss(line);
    DemoSample d;
    char c1, c2, c3, c4;
    if (!(ss >> d.s.x >> c1 >> d.s.y >> c2 >> d.a_star.vx >> c3 >> d.a_star.vy >> c4 >> d.v_star) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
      throw std::runtime_error("dataset: malformed row at line " + std::to_string(lineno));
    }
    data.push_back(d);
  }
  if (!header) throw std::runtime_error("dataset: missing header");
  return data;
}

void SaveDataset(const std::string& path, const Dataset& data,
                 const std::map<std::string, std::string>& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  WriteDatasetCsv(out, data, meta);
}

Dataset LoadDataset(const std::string& path, std::map<std::string, std::string>* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return ReadDatasetCsv(in, meta);
}

}  // namespace dpiil
