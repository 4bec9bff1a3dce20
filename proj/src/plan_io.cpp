#include "wolb/plan_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace wolb {

std::string fmt_double(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void write_plan_csv(std::ostream& os, const Plan& plan, const CarryingCapacity& K,
                    const Grid& grid, const BioParams& params) {
    const auto half = propagate_batch(plan.p0, 0.5 * plan.budget.T, params);
    os << (grid.dim == 2 ? "x,y,K,p0,u0,pT_half,pT\n" : "x,K,p0,u0,pT_half,pT\n");
    for (std::size_t c = 0; c < grid.size(); ++c) {
        os << fmt_double(grid.x[c]) << ',';
        if (grid.dim == 2) os << fmt_double(grid.y[c]) << ',';
        os << fmt_double(K.samples[c]) << ',' << fmt_double(plan.p0[c]) << ','
           << fmt_double(plan.u0[c]) << ',' << fmt_double(half[c].pT) << ','
           << fmt_double(plan.pT[c]) << '\n';
    }
}

nlohmann::json plan_to_json(const Plan& plan, const CarryingCapacity& K, const Grid& grid) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t c = 0; c < grid.size(); ++c) {
        nlohmann::json cell{{"x", grid.x[c]},       {"K", K.samples[c]}, {"p0", plan.p0[c]},
                            {"u0", plan.u0[c]},     {"pT", plan.pT[c]},  {"chi", plan.chi[c]},
                            {"kkt_case", c < plan.kkt.cases.size() ? to_string(plan.kkt.cases[c]) : "zero"}};
        if (grid.dim == 2) cell["y"] = grid.y[c];
        cells.push_back(std::move(cell));
    }
    return {
        {"regime", to_string(plan.regime)},
        {"lambda_star", plan.lambda_star},
        {"lambda0", plan.lambda0},
        {"lambda1", plan.lambda1},
        {"cost", plan.cost},
        {"budget_used", plan.budget_used},
        {"budget", {{"C", plan.budget.C}, {"M", plan.budget.M}, {"T", plan.budget.T}}},
        {"cost_evaluations", plan.cost_evaluations},
        {"kkt",
         {{"saturated", plan.kkt.saturated},
          {"zero", plan.kkt.zero},
          {"interior", plan.kkt.interior},
          {"second_order", plan.kkt.second_order},
          {"budget_rel", plan.kkt.budget_rel},
          {"ok", plan.kkt.ok()}}},
        {"notes", plan.notes},
        {"cells", std::move(cells)},
    };
}

void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw DomainError("csv row width mismatch");
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << fmt_double(row[i]);
        os << '\n';
    }
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << content;
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace wolb
