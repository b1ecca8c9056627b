#include "flsim/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace flsim {

const char* kRoundCsvHeader =
    "t,strategy,test_accuracy,test_loss,e_sq,grad_sq,comp_count_delta,"
    "n_dropped,fallback_count";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string round_csv_row(const RoundRecord& r) {
  std::ostringstream os;
  os << r.t << ',' << to_string(r.strategy) << ','
     << format_double(r.test_accuracy) << ',' << format_double(r.test_loss)
     << ',' << format_double(r.e_sq) << ',' << format_double(r.grad_sq) << ','
     << r.comp_count_delta << ',' << r.n_dropped << ',' << r.fallback_count;
  return os.str();
}

void write_round_csv(const std::vector<RoundRecord>& records,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kRoundCsvHeader << '\n';
  for (const auto& r : records) out << round_csv_row(r) << '\n';
}

std::vector<RoundRecord> read_round_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty csv");
  if (line != kRoundCsvHeader)
    throw std::runtime_error(path + ": unexpected csv header");

  std::vector<RoundRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw std::runtime_error(path + ": malformed row '" + line + "'");
    RoundRecord r;
    r.t = std::stoi(fields[0]);
    r.strategy = strategy_from_string(fields[1]);
    r.test_accuracy = std::stod(fields[2]);
    r.test_loss = std::stod(fields[3]);
    r.e_sq = std::stod(fields[4]);
    r.grad_sq = std::stod(fields[5]);
    r.comp_count_delta = std::stoll(fields[6]);
    r.n_dropped = std::stoi(fields[7]);
    r.fallback_count = std::stoi(fields[8]);
    records.push_back(r);
  }
  return records;
}

}  // namespace flsim
