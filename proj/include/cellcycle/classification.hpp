#pragma once

#include <string>
#include <vector>

namespace cellcycle {

enum class Verdict { Stable, Sweeping, Inconclusive };

inline const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::Stable: return "Stable";
    case Verdict::Sweeping: return "Sweeping";
    case Verdict::Inconclusive: return "Inconclusive";
    }
    return "?";
}

/// Evidence from the growth of the cumulative hazard over one generation,
/// alpha(m) = Q(lambda(m)) - Q(m), sampled on a grid.
struct DiscreteClassification {
    Verdict verdict = Verdict::Inconclusive;
    bool completely_mixing = false;
    double alpha_liminf_bound = 0.0; // lower bound for alpha on the tail
    double alpha_tail_min = 0.0;
    double alpha_tail_max = 0.0;
    double alpha_inf = 0.0;          // min over the whole grid
    double margin = 0.01;
    double tail_start = 0.0;
    std::vector<std::string> notes;
};

} // namespace cellcycle
