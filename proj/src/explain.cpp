#include "deepcross/explain.hpp"

#include "deepcross/csv.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

namespace deepcross {

std::vector<NonzeroEntry> extract_nonzero(const Tensor& selection, double epsilon)
{
    if (!(epsilon > 0.0))
        throw std::invalid_argument("extract_nonzero: epsilon must be positive");
    if (selection.rank() != 2)
        throw DimensionError("extract_nonzero: selection must be a matrix");
    std::vector<NonzeroEntry> out;
    for (std::size_t c = 0; c < selection.extent(0); ++c)
        for (std::size_t o = 0; o < selection.extent(1); ++o)
            if (std::abs(selection.at(c, o)) > epsilon)
                out.push_back({c, o, selection.at(c, o)});
    return out;
}

namespace {

using WeightedPatterns = std::map<FieldMultiset, double>;

void append_rank(std::vector<CombinationPattern>& out, std::size_t rank, const WeightedPatterns& total)
{
    double norm = 0.0;
    for (const auto& [fields, w] : total)
        norm += w;
    if (norm <= 0.0)
        return;
    const std::size_t first = out.size();
    for (const auto& [fields, w] : total)
        out.push_back({rank, fields, w / norm});
    std::stable_sort(out.begin() + std::ptrdiff_t(first), out.end(),
                     [](const CombinationPattern& a, const CombinationPattern& b) { return a.weight > b.weight; });
}

FieldMultiset dominant(const WeightedPatterns& d)
{
    FieldMultiset best;
    double w = -1.0;
    for (const auto& [fields, v] : d)
        if (v > w) {
            w = v;
            best = fields;
        }
    return best;
}

} // namespace

PatternSet backtrack_patterns(std::span<const Tensor> selections, std::size_t n1, double epsilon,
                              std::span<const double> rank1_weights)
{
    if (n1 == 0)
        throw std::invalid_argument("backtrack_patterns: no raw fields");
    if (!rank1_weights.empty() && rank1_weights.size() != n1)
        throw std::invalid_argument("backtrack_patterns: rank-1 weights must have one entry per raw field");
    PatternSet result;

    std::vector<WeightedPatterns> level(n1);
    for (std::size_t k = 0; k < n1; ++k) {
        level[k][{k}] = 1.0;
        result.channel_patterns.push_back({k});
    }
    if (!rank1_weights.empty()) {
        WeightedPatterns total;
        for (std::size_t k = 0; k < n1; ++k)
            total[{k}] = std::abs(rank1_weights[k]);
        append_rank(result.patterns, 1, total);
    }

    for (std::size_t b = 0; b < selections.size(); ++b) {
        const Tensor& w = selections[b];
        if (w.rank() != 2 || w.extent(0) != level.size() * n1)
            throw DimensionError("backtrack_patterns: selection " + std::to_string(b) + " has shape " +
                                 shape_string(w.shape()) + ", expected " + std::to_string(level.size() * n1) +
                                 " input channels");
        std::vector<WeightedPatterns> next(w.extent(1));
        for (const NonzeroEntry& e : extract_nonzero(w, epsilon)) {
            const WeightedPatterns& parent = level[e.in / n1];
            const std::size_t raw = e.in % n1;
            for (const auto& [fields, pw] : parent) {
                FieldMultiset grown = fields;
                grown.insert(std::upper_bound(grown.begin(), grown.end(), raw), raw);
                next[e.out][grown] += pw * std::abs(e.weight);
            }
        }
        WeightedPatterns total;
        for (const WeightedPatterns& d : next) {
            for (const auto& [fields, v] : d)
                total[fields] += v;
            result.channel_patterns.push_back(dominant(d));
        }
        append_rank(result.patterns, b + 2, total);
        level = std::move(next);
    }
    return result;
}

PatternSet backtrack_patterns(const DeepCross& model, double epsilon, std::span<const double> rank1_weights)
{
    std::vector<Tensor> selections;
    for (const CrossingBlock& b : model.blocks())
        selections.push_back(b.selection().value);
    return backtrack_patterns(selections, model.schema().size(), epsilon, rank1_weights);
}

std::vector<double> rank1_weights(const DeepCross& model, std::span<const EncodedSample> samples)
{
    const std::size_t n1 = model.schema().size();
    std::vector<double> avg(n1, 0.0);
    if (samples.empty())
        throw std::invalid_argument("rank1_weights: no samples");
    for (const EncodedSample& s : samples) {
        const SamplePrediction p = predict_sample(model, s);
        for (std::size_t k = 0; k < n1; ++k)
            avg[k] += p.feature[k];
    }
    const double total = std::accumulate(avg.begin(), avg.end(), 0.0);
    for (double& v : avg)
        v /= total;
    return avg;
}

Tensor explanation_matrix(std::span<const double> p, std::span<const double> q, double r_predicted)
{
    if (p.empty() || q.empty())
        throw std::invalid_argument("explanation_matrix: empty attention scores");
    Tensor e(Shape{q.size(), p.size()});
    for (std::size_t t = 0; t < q.size(); ++t)
        for (std::size_t i = 0; i < p.size(); ++i)
            e.at(t, i) = r_predicted * (q[t] * p[i]);
    return e;
}

IndividualExplanation individual_explanation(std::span<const double> p, std::span<const double> q,
                                             std::span<const double> r, std::size_t predicted, std::size_t k,
                                             std::span<const FieldMultiset> channel_patterns)
{
    if (predicted >= r.size())
        throw std::out_of_range("individual_explanation: predicted class outside r");
    const Tensor e = explanation_matrix(p, q, r[predicted]);
    IndividualExplanation out;
    const std::size_t cells = e.size();
    if (k > cells) {
        out.warning = "K = " + std::to_string(k) + " exceeds T*N = " + std::to_string(cells) + "; clipped";
        k = cells;
    }
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return e[a] > e[b]; });
    for (std::size_t j = 0; j < k; ++j) {
        ExplanationEntry entry{order[j] / p.size(), order[j] % p.size(), e[order[j]], {}};
        if (entry.channel < channel_patterns.size())
            entry.pattern = channel_patterns[entry.channel];
        out.entries.push_back(std::move(entry));
    }
    return out;
}

std::string pattern_label(const FieldMultiset& fields, std::span<const std::string> names)
{
    std::string s;
    for (std::size_t f : fields) {
        if (!s.empty())
            s += ',';
        s += f < names.size() ? names[f] : "f" + std::to_string(f);
    }
    return s;
}

void write_patterns_csv(std::ostream& out, std::span<const CombinationPattern> patterns,
                        std::span<const std::string> names)
{
    out << "rank,pattern,weight\n";
    for (const CombinationPattern& p : patterns)
        out << p.rank << ',' << csv::quote(pattern_label(p.fields, names)) << ',' << csv::format_double(p.weight)
            << '\n';
}

void write_explanation_csv(std::ostream& out, const IndividualExplanation& e, std::span<const std::string> names)
{
    out << "time,channel,pattern,score\n";
    for (const ExplanationEntry& x : e.entries)
        out << x.time << ',' << x.channel << ',' << csv::quote(pattern_label(x.pattern, names)) << ','
            << csv::format_double(x.score) << '\n';
}

void write_heatmap_svg(std::ostream& out, const Tensor& e)
{
    if (e.rank() != 2)
        throw DimensionError("write_heatmap_svg: expected a [T x N] matrix");
    constexpr int cell = 16;
    const auto [lo, hi] = std::minmax_element(e.values().begin(), e.values().end());
    const double range = *hi - *lo;
    const std::size_t rows = e.extent(0), cols = e.extent(1);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell << "\" height=\"" << rows * cell
        << "\">\n";
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t i = 0; i < cols; ++i) {
            const double norm = range > 0.0 ? (e.at(t, i) - *lo) / range : 1.0;
            const long g = std::lround(255.0 * (1.0 - norm));
            out << "<rect x=\"" << i * cell << "\" y=\"" << t * cell << "\" width=\"" << cell << "\" height=\""
                << cell << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
        }
    out << "</svg>\n";
}

namespace {

std::ofstream open_report(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw ReportError("cannot write " + path.string());
    return out;
}

std::string file_safe(const std::string& id)
{
    std::string s = id;
    for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
            c = '_';
    return s;
}

} // namespace

std::vector<std::filesystem::path> emit_reports(const std::filesystem::path& dir, const PatternSet& omega,
                                                std::span<const EntityReport> entities,
                                                std::span<const std::string> names)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::vector<std::filesystem::path> written;
    const auto flush = [&](std::ofstream& out, const std::filesystem::path& path) {
        out.close();
        if (!out)
            throw ReportError("failed writing " + path.string());
        written.push_back(path);
    };

    const auto patterns_path = dir / "patterns.csv";
    std::ofstream patterns = open_report(patterns_path);
    write_patterns_csv(patterns, omega.patterns, names);
    flush(patterns, patterns_path);

    for (const EntityReport& r : entities) {
        const std::string id = file_safe(r.entity_id);
        const auto csv_path = dir / ("explain_" + id + ".csv");
        std::ofstream csv_out = open_report(csv_path);
        write_explanation_csv(csv_out, r.explanation, names);
        flush(csv_out, csv_path);

        const auto svg_path = dir / ("heatmap_" + id + ".svg");
        std::ofstream svg = open_report(svg_path);
        write_heatmap_svg(svg, r.matrix);
        flush(svg, svg_path);
    }
    return written;
}

} // namespace deepcross
