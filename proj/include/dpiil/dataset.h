#ifndef DPIIL_DATASET_H_
#define DPIIL_DATASET_H_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dpiil/arena.h"

namespace dpiil {

// One expert-labelled transition: state, expert action and observed speed.
struct DemoSample {
  State2 s;
  Action2 a_star;
  double v_star = 0.0;

  bool operator==(const DemoSample&) const = default;
};

using Dataset = std::vector<DemoSample>;

// Squared Euclidean displacement of the position between two steps.
double SpeedOf(const State2& s_t, const State2& s_next);

// CSV with '#'-prefixed metadata lines and columns x,y,ax,ay,v_star.
// Values are written with 17 significant digits so a round trip is exact.
void WriteDatasetCsv(std::ostream& out, const Dataset& data,
                     const std::map<std::string, std::string>& meta = {});
Dataset ReadDatasetCsv(std::istream& in, std::map<std::string, std::string>* meta = nullptr);

void SaveDataset(const std::string& path, const Dataset& data,
                 const std::map<std::string, std::string>& meta = {});
Dataset LoadDataset(const std::string& path, std::map<std::string, std::string>* meta = nullptr);

}  // namespace dpiil

#endif  // DPIIL_DATASET_H_
