#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wolb/model_core.hpp"

namespace wolb {

enum class CriterionStatus { pass, fail, skipped };
const char* to_string(CriterionStatus s);

struct CriterionResult {
    std::string id;
    std::string title;
    CriterionStatus status = CriterionStatus::fail;
    double seconds = 0.0;
    std::string detail;
};

struct AcceptanceOptions {
    /// Criteria tied to a stated grid or sample size are skipped, not failed.
    bool reduced_resolution = false;
    /// Multiplies f' and f'' in the T0 check; -1 is the sign-flip mutation.
    double f_sign = 1.0;
    int threads = 1;
    /// Empty runs every criterion.
    std::vector<std::string> only;
};

struct AcceptanceReport {
    std::vector<CriterionResult> results;

    bool ok() const;
    int count(CriterionStatus s) const;
    nlohmann::json to_json() const;
};

struct CriterionInfo {
    std::string id;
    std::string title;
    /// Depends on a stated resolution or sample count.
    bool resolution_bound = false;
};
const std::vector<CriterionInfo>& acceptance_criteria();

/// Runs the criteria in order; `on_result` sees each result as it completes.
AcceptanceReport run_acceptance(const AcceptanceOptions& opts,
                                const std::function<void(const CriterionResult&)>& on_result = {});

/// One line: STATUS id title (detail) [seconds].
std::string format_result(const CriterionResult& r);

}  // namespace wolb
