#include "picepr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "picepr/util.hpp"

namespace picepr {

Metrics metrics(const ConfusionCounts& cc) {
    if (cc.total() == 0) throw Error("EmptyCounts", "confusion matrix has no entries");
    Metrics m;
    auto d = [](std::uint64_t v) { return static_cast<double>(v); };
    m.ra = (d(cc.tp) + d(cc.tn)) / d(cc.total());
    double recall = (cc.tp + cc.fn) == 0 ? 1.0 : d(cc.tp) / (d(cc.tp) + d(cc.fn));
    double specificity = (cc.tn + cc.fp) == 0 ? 1.0 : d(cc.tn) / (d(cc.tn) + d(cc.fp));
    m.ba = (recall + specificity) / 2.0;
    std::uint64_t f1_den = 2 * cc.tp + cc.fp + cc.fn;
    m.f1 = f1_den == 0 ? 0.0 : 2.0 * d(cc.tp) / d(f1_den);
    return m;
}

ConfusionCounts confusion(const std::vector<Prediction>& predictions, const Corpus& truth,
                          std::size_t dimension) {
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : truth.samples) by_id[s.id] = &s;

    ConfusionCounts cc;
    for (const auto& pred : predictions) {
        auto it = by_id.find(pred.sample_id);
        if (it == by_id.end()) {
            throw Error("Misalignment", "prediction for unknown sample '" + pred.sample_id + "'");
        }
        if (!it->second->labels) {
            throw Error("Misalignment", "truth sample '" + pred.sample_id + "' is unlabeled");
        }
        int g = it->second->labels->bits.at(dimension);
        int p = pred.labels.bits.at(dimension);
        if (g == 1 && p == 1) ++cc.tp;
        else if (g == 0 && p == 1) ++cc.fp;
        else if (g == 0 && p == 0) ++cc.tn;
        else ++cc.fn;
    }
    return cc;
}

double erfc_local(double x) {
    if (x < 0.0) return 2.0 - erfc_local(-x);
    const double inv_sqrt_pi = 0.5641895835477562869480794515607725858;
    if (x < 2.0) {
        // Maclaurin series for erf: converges quickly for small arguments.
        double term = x;
        double sum = x;
        double x2 = x * x;
        for (int n = 1; n < 200; ++n) {
            term *= -x2 / n;
            double contribution = term / (2.0 * n + 1.0);
            sum += contribution;
            if (std::abs(contribution) < 1e-18 * std::abs(sum)) break;
        }
        return 1.0 - 2.0 * inv_sqrt_pi * sum;
    }
    // Continued fraction sqrt(pi) e^{x^2} erfc(x) = 1/(x+ (1/2)/(x+ 1/(x+ ...)))
    // evaluated with the modified Lentz algorithm.
    const double tiny = 1e-300;
    double f = tiny;
    double c = f;
    double d = 0.0;
    for (int n = 1; n < 400; ++n) {
        double a = n == 1 ? 1.0 : (n - 1) / 2.0;
        double b = x;
        d = b + a * d;
        if (std::abs(d) < tiny) d = tiny;
        c = b + a / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x * x) * inv_sqrt_pi * f;
}

double chi_squared_df1_tail(double chi2) {
    if (chi2 <= 0.0) return 1.0;
    double p = erfc_local(std::sqrt(chi2 / 2.0));
    return std::clamp(p, 0.0, 1.0);
}

McNemarResult mcnemar(std::uint64_t b, std::uint64_t c) {
    McNemarResult r;
    r.b = b;
    r.c = c;
    if (b + c == 0) {
        r.chi2 = 0.0;
        r.p = 1.0;
        return r;
    }
    double diff = static_cast<double>(b) - static_cast<double>(c);
    r.chi2 = diff * diff / static_cast<double>(b + c);
    r.p = chi_squared_df1_tail(r.chi2);
    return r;
}

Cell classify_cell(int truth_bit, int predicted_bit) {
    if (truth_bit == 1) return predicted_bit == 1 ? Cell::TP : Cell::FN;
    return predicted_bit == 1 ? Cell::FP : Cell::TN;
}

const char* cell_name(Cell cell) {
    switch (cell) {
        case Cell::TP: return "TP";
        case Cell::FP: return "FP";
        case Cell::TN: return "TN";
        case Cell::FN: return "FN";
    }
    return "TP";
}

ordered_json TransitionFlows::to_json() const {
    ordered_json flows;
    for (int from = 0; from < 4; ++from) {
        for (int to = 0; to < 4; ++to) {
            std::string key = std::string(cell_name(static_cast<Cell>(from))) + "->" +
                              cell_name(static_cast<Cell>(to));
            flows[key] = counts[static_cast<std::size_t>(from)][static_cast<std::size_t>(to)];
        }
    }
    ordered_json j;
    j["flows"] = std::move(flows);
    j["b"] = b;
    j["c"] = c;
    return j;
}

TransitionFlows transitions(const Corpus& truth, const std::vector<Prediction>& baseline,
                            const std::vector<Prediction>& proposed) {
    std::map<std::string, const Sample*> truth_by_id;
    for (const auto& s : truth.samples) truth_by_id[s.id] = &s;
    std::map<std::string, const Prediction*> proposed_by_id;
    for (const auto& p : proposed) proposed_by_id[p.sample_id] = &p;

    TransitionFlows flows;
    for (const auto& base : baseline) {
        auto prop = proposed_by_id.find(base.sample_id);
        if (prop == proposed_by_id.end()) continue;  // excluded in one run: not a pair
        auto truth_it = truth_by_id.find(base.sample_id);
        if (truth_it == truth_by_id.end() || !truth_it->second->labels) {
            throw Error("Misalignment", "no ground truth for sample '" + base.sample_id + "'");
        }
        const auto& g = truth_it->second->labels->bits;
        const auto& r = base.labels.bits;
        const auto& p = prop->second->labels.bits;
        if (g.size() != r.size() || g.size() != p.size()) {
            throw Error("Misalignment", "dimension mismatch for sample '" + base.sample_id + "'");
        }
        // Dimensions flatten into one binary sequence.
        for (std::size_t d = 0; d < g.size(); ++d) {
            Cell from = classify_cell(g[d], r[d]);
            Cell to = classify_cell(g[d], p[d]);
            ++flows.counts[static_cast<std::size_t>(from)][static_cast<std::size_t>(to)];
            bool was_correct = from == Cell::TP || from == Cell::TN;
            bool is_correct = to == Cell::TP || to == Cell::TN;
            if (was_correct && !is_correct) ++flows.b;
            if (!was_correct && is_correct) ++flows.c;
        }
    }
    return flows;
}

EvalReport evaluate_predictions(const std::vector<Prediction>& predictions, const Corpus& truth) {
    EvalReport report;
    const auto& schema = PersonalitySchema::of(truth.schema);
    report.schema = schema.name();
    report.evaluated = predictions.size();
    report.excluded = truth.size() >= predictions.size() ? truth.size() - predictions.size() : 0;
    report.error_rate =
        truth.size() == 0 ? 0.0
                          : static_cast<double>(report.excluded) / static_cast<double>(truth.size());
    for (std::size_t d = 0; d < schema.size(); ++d) {
        DimensionReport dim;
        dim.code = schema.dimensions[d].code;
        dim.counts = confusion(predictions, truth, d);
        dim.m = metrics(dim.counts);
        report.dimensions.push_back(dim);
    }
    return report;
}

ordered_json report_to_json(const EvalReport& report) {
    ordered_json j;
    j["schema"] = report.schema;
    j["evaluated"] = report.evaluated;
    j["excluded"] = report.excluded;
    j["error_rate"] = report.error_rate;
    auto dims = ordered_json::array();
    for (const auto& d : report.dimensions) {
        ordered_json dj;
        dj["code"] = d.code;
        dj["ba"] = d.m.ba;
        dj["f1"] = d.m.f1;
        dj["ra"] = d.m.ra;
        dj["counts"] = {{"tp", d.counts.tp}, {"fp", d.counts.fp}, {"tn", d.counts.tn},
                        {"fn", d.counts.fn}};
        dims.push_back(std::move(dj));
    }
    j["dimensions"] = std::move(dims);
    return j;
}

std::string report_to_text(const EvalReport& report) {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s\n", "dimension", "BA", "F1", "RA");
    os << line;
    for (const auto& d : report.dimensions) {
        std::snprintf(line, sizeof(line), "%-12s %8.4f %8.4f %8.4f\n", d.code.c_str(), d.m.ba,
                      d.m.f1, d.m.ra);
        os << line;
    }
    std::snprintf(line, sizeof(line), "rows evaluated %zu, excluded %zu, ER %.4f\n",
                  report.evaluated, report.excluded, report.error_rate);
    os << line;
    return os.str();
}

void save_predictions_jsonl(const std::vector<Prediction>& predictions,
                            const std::filesystem::path& path, SchemaKind schema) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open for writing: " + path.string());
    const std::string schema_name = PersonalitySchema::of(schema).name();
    for (const auto& p : predictions) {
        ordered_json j;
        j["sample_id"] = p.sample_id;
        j["schema"] = schema_name;
        j["labels"] = p.labels.bits;
        out << j.dump() << "\n";
    }
}

std::vector<Prediction> load_predictions_jsonl(const std::filesystem::path& path,
                                               SchemaKind schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open: " + path.string());
    std::vector<Prediction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto j = ordered_json::parse(line);
        Prediction p;
        p.sample_id = j.at("sample_id").get<std::string>();
        p.labels = make_label_vector(schema, j.at("labels").get<std::vector<int>>());
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace picepr
