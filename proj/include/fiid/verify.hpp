#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fiid {

enum class VerifyLevel { Quick, Full };

VerifyLevel verify_level_from_string(const std::string& s);

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    nlohmann::json measured = nlohmann::json::object();
    double seconds = 0;

    /// "criterion N: PASS|FAIL  name  (key measurements)"
    std::string line() const;
};

struct VerifyReport {
    std::string level;
    std::vector<CriterionResult> criteria;
    bool all_pass() const;
    nlohmann::json to_json() const;
};

inline constexpr int kCriterionCount = 8;

/// Runs one acceptance criterion (1..8).
CriterionResult verify_criterion(int id, VerifyLevel level, int threads = 1);

/// Runs the listed criteria (all when empty), reporting each as it finishes.
VerifyReport verify_all(VerifyLevel level, int threads = 1, const std::vector<int>& only = {},
                        const std::function<void(const CriterionResult&)>& on_result = {});

}  // namespace fiid
