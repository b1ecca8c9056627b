#pragma once

#include "flsim/metrics.hpp"

#include <string>
#include <vector>

namespace flsim {

/// Fixed column order:
/// t,strategy,test_accuracy,test_loss,e_sq,grad_sq,comp_count_delta,n_dropped,fallback_count
extern const char* kRoundCsvHeader;

std::string round_csv_row(const RoundRecord& r);
void write_round_csv(const std::vector<RoundRecord>& records,
                     const std::string& path);
std::vector<RoundRecord> read_round_csv(const std::string& path);

/// %.17g: shortest fixed formatting that round-trips doubles exactly.
std::string format_double(double v);

}  // namespace flsim
