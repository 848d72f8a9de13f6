#include "gmeasure/eval.hpp"

#include <algorithm>
#include <cmath>

#include "gmeasure/errors.hpp"

namespace gmeasure {

double generalization_gap(const ZooEntry& entry) { return entry.test_error - entry.train_error; }

namespace {

int sign_of(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

double measure_of(const ZooEntry& e, const std::string& name) {
    auto it = e.measure_values.find(name);
    if (it == e.measure_values.end())
        throw ValidationError("model " + e.model_id + " lacks measure '" + name + "'");
    return it->second;
}

// joint counts over (measure sign in {-1,+1}) x (gap sign in {-1,+1})
struct CellCounts {
    double c[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    double total() const { return c[0][0] + c[0][1] + c[1][0] + c[1][1]; }
};

double plugin_mi(const CellCounts& cell) {
    const double n = cell.total();
    double mi = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            double pab = cell.c[a][b] / n;
            if (pab <= 0.0) continue;
            double pa = (cell.c[a][0] + cell.c[a][1]) / n;
            double pb = (cell.c[0][b] + cell.c[1][b]) / n;
            mi += pab * std::log(pab / (pa * pb));
        }
    return std::max(mi, 0.0);
}

std::vector<std::vector<std::string>> subsets_up_to(const std::vector<std::string>& keys,
                                                    int max_size) {
    std::vector<std::vector<std::string>> out;
    const std::size_t n = keys.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        if (static_cast<int>(__builtin_popcountll(mask)) > max_size) continue;
        std::vector<std::string> subset;
        for (std::size_t k = 0; k < n; ++k)
            if (mask & (std::size_t{1} << k)) subset.push_back(keys[k]);
        out.push_back(std::move(subset));
    }
    return out;
}

}  // namespace

CmiScore conditional_mi_score(const std::vector<ZooEntry>& zoo, const std::string& measure_name,
                              int max_condition_size) {
    if (zoo.size() < 2) throw DegenerateZoo("need at least 2 zoo entries");
    std::vector<std::string> keys;
    for (const auto& [k, v] : zoo.front().hyperparams) keys.push_back(k);
    for (const auto& e : zoo) {
        if (e.hyperparams.size() != keys.size())
            throw ValidationError("hyperparameter keys differ across zoo entries");
        for (const auto& k : keys)
            if (!e.hyperparams.count(k))
                throw ValidationError("model " + e.model_id + " lacks hyperparameter '" + k + "'");
    }

    CmiScore result;
    bool any_subset = false;
    for (auto& subset : subsets_up_to(keys, max_condition_size)) {
        // group entries into cells by their values on the subset
        std::map<std::vector<std::string>, std::vector<std::size_t>> cells;
        for (std::size_t i = 0; i < zoo.size(); ++i) {
            std::vector<std::string> key;
            for (const auto& k : subset) key.push_back(zoo[i].hyperparams.at(k));
            cells[key].push_back(i);
        }
        SubsetScore ss;
        ss.subset = subset;
        std::vector<CellCounts> counts;
        for (const auto& [cell_key, members] : cells) {
            CellCounts cc;
            int usable = 0;
            for (std::size_t a = 0; a < members.size(); ++a)
                for (std::size_t b = a + 1; b < members.size(); ++b) {
                    const ZooEntry& ea = zoo[members[a]];
                    const ZooEntry& eb = zoo[members[b]];
                    int sm = sign_of(measure_of(ea, measure_name) - measure_of(eb, measure_name));
                    int sg = sign_of(generalization_gap(ea) - generalization_gap(eb));
                    if (sm == 0 || sg == 0) continue;  // ties dropped
                    cc.c[(sm + 1) / 2][(sg + 1) / 2] += 1.0;
                    ++usable;
                }
            if (usable < 2) {
                ++ss.skipped_cells;
                continue;
            }
            ss.usable_pairs += usable;
            counts.push_back(cc);
        }
        if (counts.empty()) continue;  // subset unusable
        // I(Vm; Vg | cell) = sum_c p(c) I_c, weights by usable pair count
        double total_pairs = 0.0;
        for (const auto& cc : counts) total_pairs += cc.total();
        double mi = 0.0;
        for (const auto& cc : counts) mi += (cc.total() / total_pairs) * plugin_mi(cc);
        ss.score = 100.0 * mi;
        any_subset = true;
        result.per_condition.push_back(std::move(ss));
    }
    if (!any_subset)
        throw DegenerateZoo("no conditioning subset has a cell with >= 2 usable pairs");
    const SubsetScore* best = nullptr;
    for (const auto& ss : result.per_condition)
        if (!best || ss.score < best->score) best = &ss;
    result.score = best->score;
    result.min_subset = best->subset;
    return result;
}

double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double concordant = 0.0, discordant = 0.0, tied_a = 0.0, tied_b = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double da = a[i] - a[j];
            double db = b[i] - b[j];
            if (da == 0.0) tied_a += 1.0;
            if (db == 0.0) tied_b += 1.0;
            if (da == 0.0 || db == 0.0) continue;
            if (da * db > 0.0)
                concordant += 1.0;
            else
                discordant += 1.0;
        }
    double n0 = static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0;
    double denom = std::sqrt((n0 - tied_a) * (n0 - tied_b));
    if (denom == 0.0) return 0.0;
    return (concordant - discordant) / denom;
}

double rank_correlation(const std::vector<ZooEntry>& zoo, const std::string& measure_name) {
    if (zoo.size() < 2) throw DegenerateZoo("need at least 2 zoo entries");
    std::vector<double> m, g;
    for (const auto& e : zoo) {
        m.push_back(measure_of(e, measure_name));
        g.push_back(generalization_gap(e));
    }
    return kendall_tau_b(m, g);
}

}  // namespace gmeasure
