#include "deepcross/data.hpp"

#include "deepcross/csv.hpp"
#include "deepcross/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>

namespace deepcross {

std::string_view to_string(FieldKind kind)
{
    switch (kind) {
    case FieldKind::numerical:
        return "num";
    case FieldKind::categorical:
        return "cat";
    case FieldKind::multi_valued:
        return "multi";
    }
    return "?";
}

FieldKind parse_field_kind(std::string_view s)
{
    if (s == "num" || s == "numerical")
        return FieldKind::numerical;
    if (s == "cat" || s == "categorical")
        return FieldKind::categorical;
    if (s == "multi" || s == "multi_valued")
        return FieldKind::multi_valued;
    throw std::invalid_argument("unknown field kind '" + std::string(s) + "' (expected num, cat or multi)");
}

Distribution parse_distribution(std::string_view cell)
{
    Distribution d;
    if (cell.empty())
        return d;
    double total = 0.0;
    std::size_t start = 0;
    while (start <= cell.size()) {
        const std::size_t end = std::min(cell.find(';', start), cell.size());
        const std::string_view item = cell.substr(start, end - start);
        const std::size_t colon = item.rfind(':');
        double w = 0.0;
        if (colon == std::string_view::npos || !csv::parse_double(item.substr(colon + 1), w) || w < 0.0)
            throw std::invalid_argument("bad distribution entry '" + std::string(item) + "'");
        d.emplace_back(std::string(item.substr(0, colon)), w);
        total += w;
        start = end + 1;
    }
    if (!(total > 0.0))
        throw std::invalid_argument("distribution weights sum to zero");
    // Already-normalised input is kept bit-exact so write/read round trips.
    if (std::abs(total - 1.0) > 1e-12)
        for (auto& [name, w] : d)
            w /= total;
    return d;
}

std::string format_distribution(const Distribution& d)
{
    std::string s;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i)
            s += ';';
        s += d[i].first + ':' + csv::format_double(d[i].second);
    }
    return s;
}

LoadResult load_csv(const std::filesystem::path& path, const SchemaConfig& config)
{
    std::ifstream in(path);
    if (!in)
        throw IngestionError("cannot open " + path.string());
    return read_csv(in, config);
}

LoadResult read_csv(std::istream& in, const SchemaConfig& config)
{
    LoadResult result;
    csv::Reader reader(in);
    std::vector<std::string> row;
    if (!reader.next(row)) {
        result.warnings.push_back("empty input: no header row");
        return result;
    }

    std::unordered_map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < row.size(); ++i)
        column.emplace(row[i], i);
    auto require = [&](const std::string& name) {
        const auto it = column.find(name);
        if (it == column.end())
            throw IngestionError("missing required column '" + name + "'");
        return it->second;
    };
    const std::size_t id_col = require("entity_id");
    const std::size_t period_col = require("period_index");
    const std::size_t label_col = require(config.label_column);
    std::vector<std::size_t> field_cols;
    for (const FieldSpec& f : config.fields)
        field_cols.push_back(require(f.name));

    struct Row {
        std::vector<RawValue> values;
        std::optional<int> label;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, std::map<long long, Row>> entities;

    while (reader.next(row)) {
        const std::size_t line = reader.line();
        auto fail = [&](std::string msg) { result.row_errors.push_back({line, std::move(msg)}); };
        if (row.size() < column.size()) {
            fail("expected " + std::to_string(column.size()) + " cells, got " + std::to_string(row.size()));
            continue;
        }
        long long period = 0;
        if (!csv::parse_int(row[period_col], period)) {
            fail("non-integer period_index '" + row[period_col] + "'");
            continue;
        }
        Row r;
        bool ok = true;
        std::size_t missing = 0;
        for (std::size_t j = 0; j < config.fields.size() && ok; ++j) {
            const std::string& cell = row[field_cols[j]];
            switch (config.fields[j].kind) {
            case FieldKind::numerical: {
                double v = 0.0;
                if (cell.empty()) {
                    ++missing;
                    v = std::numeric_limits<double>::quiet_NaN();
                } else if (!csv::parse_double(cell, v)) {
                    fail("non-numeric value '" + cell + "' in field '" + config.fields[j].name + "'");
                    ok = false;
                }
                r.values.emplace_back(v);
                break;
            }
            case FieldKind::categorical:
                r.values.emplace_back(cell);
                break;
            case FieldKind::multi_valued:
                try {
                    r.values.emplace_back(parse_distribution(cell));
                } catch (const std::invalid_argument& e) {
                    fail(std::string(e.what()) + " in field '" + config.fields[j].name + "'");
                    ok = false;
                }
                break;
            }
        }
        if (!ok)
            continue;
        if (const std::string& cell = row[label_col]; !cell.empty()) {
            long long label = 0;
            if (!csv::parse_int(cell, label) || label < 0) {
                fail("bad label '" + cell + "'");
                continue;
            }
            r.label = int(label);
        }
        const std::string& id = row[id_col];
        auto [it, inserted] = entities.try_emplace(id);
        if (inserted)
            order.push_back(id);
        if (!it->second.emplace(period, std::move(r)).second) {
            fail("duplicate (entity, period) pair (" + id + ", " + std::to_string(period) + ")");
            continue;
        }
        result.missing_cells += missing;
    }

    const std::size_t span = config.time_span;
    for (const std::string& id : order) {
        const auto& periods = entities[id];
        const Row& last = periods.rbegin()->second;
        // Trailing run of consecutive periods ending at the final one.
        std::vector<const Row*> run{&last};
        long long expect = periods.rbegin()->first - 1;
        for (auto it = std::next(periods.rbegin()); it != periods.rend() && run.size() < span; ++it) {
            if (it->first != expect)
                break;
            run.push_back(&it->second);
            --expect;
        }
        if (!last.label) {
            result.warnings.push_back("entity '" + id + "' has no label on its final period; dropped");
            ++result.dropped_entities;
            continue;
        }
        if (run.size() < span) {
            ++result.dropped_entities;
            continue;
        }
        SequencedSample s;
        s.entity_id = id;
        s.label = *last.label;
        for (auto it = run.rbegin(); it != run.rend(); ++it)
            s.steps.push_back((*it)->values);
        result.samples.push_back(std::move(s));
    }
    if (result.dropped_entities)
        result.warnings.push_back(std::to_string(result.dropped_entities) + " entities dropped (fewer than " +
                                  std::to_string(span) + " consecutive periods or unlabeled)");
    if (result.missing_cells)
        result.warnings.push_back(std::to_string(result.missing_cells) +
                                  " missing numeric cells; imputed with the training mean");
    return result;
}

void write_csv(std::ostream& out, std::span<const SequencedSample> samples, const SchemaConfig& config)
{
    out << "entity_id,period_index";
    for (const FieldSpec& f : config.fields)
        out << ',' << csv::escape(f.name);
    out << ',' << csv::escape(config.label_column) << '\n';
    for (const SequencedSample& s : samples) {
        for (std::size_t t = 0; t < s.steps.size(); ++t) {
            out << csv::escape(s.entity_id) << ',' << t;
            for (const RawValue& v : s.steps[t]) {
                out << ',';
                if (const double* x = std::get_if<double>(&v)) {
                    if (!std::isnan(*x))
                        out << csv::format_double(*x);
                } else if (const std::string* c = std::get_if<std::string>(&v)) {
                    out << csv::escape(*c);
                } else {
                    out << csv::escape(format_distribution(std::get<Distribution>(v)));
                }
            }
            out << ',';
            if (t + 1 == s.steps.size())
                out << s.label;
            out << '\n';
        }
    }
}

void write_csv(const std::filesystem::path& path, std::span<const SequencedSample> samples,
               const SchemaConfig& config)
{
    std::ofstream out(path);
    if (!out)
        throw IngestionError("cannot write " + path.string());
    write_csv(out, samples, config);
}

std::size_t Schema::numerical_count() const
{
    return std::size_t(std::count_if(fields.begin(), fields.end(), [](const auto& f) { return f.is_numerical(); }));
}

std::vector<std::string> Schema::names() const
{
    std::vector<std::string> n;
    for (const auto& f : fields)
        n.push_back(f.name);
    return n;
}

std::uint64_t Schema::hash() const
{
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xff;
        h *= 1099511628211ULL;
    };
    for (const auto& f : fields) {
        mix(f.name);
        mix(to_string(f.kind));
        for (const auto& v : f.vocab)
            mix(v);
    }
    return h;
}

Schema build_schema(std::span<const SequencedSample> train, const SchemaConfig& config)
{
    if (train.empty())
        throw std::invalid_argument("build_schema: no training samples");
    Schema schema;
    for (std::size_t j = 0; j < config.fields.size(); ++j) {
        const FieldSpec& spec = config.fields[j];
        FeatureField f;
        f.name = spec.name;
        f.kind = spec.kind;
        f.source = j;
        if (spec.kind == FieldKind::numerical) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& s : train)
                for (const auto& step : s.steps)
                    if (const double x = std::get<double>(step[j]); !std::isnan(x)) {
                        sum += x;
                        ++n;
                    }
            if (n < 2) {
                schema.dropped.push_back(spec.name);
                schema.warnings.push_back("field '" + spec.name + "' has fewer than two observed values; dropped");
                continue;
            }
            f.mean = sum / double(n);
            double ss = 0.0;
            for (const auto& s : train)
                for (const auto& step : s.steps)
                    if (const double x = std::get<double>(step[j]); !std::isnan(x))
                        ss += (x - f.mean) * (x - f.mean);
            f.std = std::sqrt(ss / double(n - 1));
            if (!(f.std > 1e-12 * std::max(1.0, std::abs(f.mean)))) {
                schema.dropped.push_back(spec.name);
                schema.warnings.push_back("field '" + spec.name + "' has zero variance; dropped");
                continue;
            }
        } else {
            std::set<std::string> cats;
            for (const auto& s : train)
                for (const auto& step : s.steps) {
                    if (spec.kind == FieldKind::categorical)
                        cats.insert(std::get<std::string>(step[j]));
                    else
                        for (const auto& [name, w] : std::get<Distribution>(step[j]))
                            cats.insert(name);
                }
            if (cats.empty()) {
                schema.dropped.push_back(spec.name);
                schema.warnings.push_back("field '" + spec.name + "' has no categories; dropped");
                continue;
            }
            f.vocab.assign(cats.begin(), cats.end());
        }
        schema.fields.push_back(std::move(f));
    }
    return schema;
}

namespace {

std::size_t vocab_index(const FeatureField& f, const std::string& cat)
{
    const auto it = std::lower_bound(f.vocab.begin(), f.vocab.end(), cat);
    return (it != f.vocab.end() && *it == cat) ? std::size_t(it - f.vocab.begin()) : f.oov_index();
}

} // namespace

EncodedSample normalize(const SequencedSample& sample, const Schema& schema)
{
    EncodedSample out;
    out.entity_id = sample.entity_id;
    out.label = sample.label;
    for (const auto& step : sample.steps) {
        std::vector<EncodedValue> enc;
        enc.reserve(schema.size());
        for (const FeatureField& f : schema.fields) {
            if (f.source >= step.size())
                throw std::invalid_argument("normalize: sample has " + std::to_string(step.size()) +
                                            " fields, schema expects field '" + f.name + "'");
            const RawValue& v = step[f.source];
            switch (f.kind) {
            case FieldKind::numerical: {
                const double x = std::get<double>(v);
                enc.emplace_back(std::isnan(x) ? 0.0 : (x - f.mean) / f.std);
                break;
            }
            case FieldKind::categorical:
                enc.emplace_back(vocab_index(f, std::get<std::string>(v)));
                break;
            case FieldKind::multi_valued: {
                std::vector<double> dist(f.vocab.size() + 1, 0.0);
                const auto& d = std::get<Distribution>(v);
                if (d.empty())
                    dist[f.oov_index()] = 1.0;
                for (const auto& [name, w] : d)
                    dist[vocab_index(f, name)] += w;
                enc.emplace_back(std::move(dist));
                break;
            }
            }
        }
        out.steps.push_back(std::move(enc));
    }
    return out;
}

std::vector<EncodedSample> normalize(std::span<const SequencedSample> samples, const Schema& schema)
{
    std::vector<EncodedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(normalize(s, schema));
    return out;
}

DatasetSplit split(std::span<const SequencedSample> samples, double ratio, std::uint64_t seed)
{
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split: ratio must lie in (0, 1)");
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto [it, inserted] = members.try_emplace(samples[i].entity_id);
        if (inserted)
            ids.push_back(samples[i].entity_id);
        it->second.push_back(i);
    }
    if (ids.size() < 2)
        throw std::invalid_argument("split: need at least two entities");
    Rng rng(seed);
    rng.shuffle(ids);
    const auto n = double(ids.size());
    const std::size_t n_train = std::clamp<std::size_t>(std::size_t(std::llround(ratio * n)), 1, ids.size() - 1);
    DatasetSplit out;
    out.seed = seed;
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t idx : members[ids[i]])
            (i < n_train ? out.train : out.test).push_back(samples[idx]);
    return out;
}

SchemaConfig synthetic_schema_config(std::size_t time_span, std::size_t noise_fields)
{
    SchemaConfig c;
    c.time_span = time_span;
    c.fields.push_back({"x1", FieldKind::numerical});
    c.fields.push_back({"x2", FieldKind::numerical});
    for (std::size_t i = 0; i < noise_fields; ++i)
        c.fields.push_back({"noise" + std::to_string(i + 1), FieldKind::numerical});
    return c;
}

std::vector<SequencedSample> gen_synthetic_interaction(std::size_t n_samples, std::size_t time_span,
                                                       std::size_t noise_fields, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<SequencedSample> out;
    out.reserve(n_samples);
    const std::size_t width = std::to_string(n_samples).size();
    for (std::size_t i = 0; i < n_samples; ++i) {
        SequencedSample s;
        std::string num = std::to_string(i);
        s.entity_id = "syn" + std::string(width - num.size(), '0') + num;
        for (std::size_t t = 0; t < time_span; ++t) {
            std::vector<RawValue> step;
            for (std::size_t j = 0; j < 2 + noise_fields; ++j)
                step.emplace_back(rng.uniform(-1.0, 1.0));
            s.steps.push_back(std::move(step));
        }
        const auto& last = s.steps.back();
        s.label = std::get<double>(last[0]) * std::get<double>(last[1]) > 0.0 ? 1 : 0;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace deepcross
