#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wolb/planner.hpp"

namespace wolb {

/// Shortest round-trip decimal for a double; CSV and JSON output share it so
/// repeated runs are byte-identical.
std::string fmt_double(double v);

/// Rows x[,y],K,p0,u0,pT_half,pT with pT_half the proportion at T/2.
void write_plan_csv(std::ostream& os, const Plan& plan, const CarryingCapacity& K,
                    const Grid& grid, const BioParams& params);

nlohmann::json plan_to_json(const Plan& plan, const CarryingCapacity& K, const Grid& grid);

/// Header plus rows; every row must have the header's width.
void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace wolb
