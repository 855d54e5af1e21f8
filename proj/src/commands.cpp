#include "deepcross/commands.hpp"

#include "deepcross/csv.hpp"
#include "deepcross/grad_check.hpp"
#include "deepcross/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace deepcross {
namespace {

constexpr std::string_view kKeys[] = {
    "data",   "fields", "label",   "entity_column", "T",          "d",        "rank_widths",   "s",
    "h",      "k",      "q",       "lambda",        "lr",         "epochs",   "batch_size",    "seed",
    "epsilon", "K",     "split_ratio", "zscore_columns", "lr_l1", "lr_rate", "lr_epochs",
};

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const std::string item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
        if (!item.empty())
            out.push_back(item);
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected)
{
    throw UsageError("config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" +
                     std::string(value) + "'");
}

std::size_t parse_count(std::string_view key, std::string_view value)
{
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        bad_value(key, value, "a non-negative integer");
    return out;
}

double parse_real(std::string_view key, std::string_view value)
{
    double out = 0;
    if (!csv::parse_double(value, out))
        bad_value(key, value, "a finite number");
    return out;
}

std::vector<std::size_t> parse_counts(std::string_view key, std::string_view value)
{
    std::vector<std::size_t> out;
    if (value == "none")
        return out;
    for (const std::string& item : split_list(value))
        out.push_back(parse_count(key, item));
    return out;
}

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::vector<EncodedSample> select(const PreparedData& d, EvalSplit which)
{
    switch (which) {
    case EvalSplit::train:
        return d.train;
    case EvalSplit::all: {
        auto all = d.train;
        all.insert(all.end(), d.test.begin(), d.test.end());
        return all;
    }
    default:
        return d.test;
    }
}

// Data prepared against a checkpoint's stored load and split settings; refuses a different schema.
PreparedData prepare_for(const Checkpoint& ck, const std::filesystem::path& data)
{
    PreparedData d = prepare_data(data, ck.meta.load, ck.meta.split_ratio, ck.meta.split_seed);
    if (d.schema.hash() != ck.model.schema().hash())
        throw std::runtime_error("model/schema mismatch: " + data.string() +
                                 " yields a different field set or vocabulary than the checkpoint");
    d.schema = ck.model.schema();
    d.train = normalize(d.split.train, d.schema);
    d.test = normalize(d.split.test, d.schema);
    return d;
}

std::filesystem::path data_path(const std::filesystem::path& flag, const RunConfig& cfg)
{
    if (!flag.empty())
        return flag;
    if (cfg.data.empty())
        throw UsageError("no data file: pass --data or set the data key");
    return cfg.data;
}

} // namespace

std::span<const std::string_view> config_keys()
{
    return kKeys;
}

RunConfig RunConfig::parse(std::istream& in)
{
    RunConfig cfg;
    std::set<std::string> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(std::string_view(raw).substr(0, raw.find('#')));
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys))
            throw UsageError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
        if (!seen.insert(key).second)
            throw UsageError("config key '" + key + "' given twice");

        if (key == "data")
            cfg.data = value;
        else if (key == "fields") {
            cfg.fields.clear();
            for (const std::string& item : split_list(value)) {
                const auto colon = item.rfind(':');
                if (colon == std::string::npos)
                    bad_value(key, item, "name:kind");
                try {
                    cfg.fields.push_back({trim(item.substr(0, colon)), parse_field_kind(trim(item.substr(colon + 1)))});
                } catch (const std::invalid_argument&) {
                    bad_value(key, item, "a kind of num, cat or multi");
                }
            }
        } else if (key == "label")
            cfg.label = value;
        else if (key == "entity_column")
            cfg.entity_column = value;
        else if (key == "T")
            cfg.time_span = parse_count(key, value);
        else if (key == "d")
            cfg.dim = parse_count(key, value);
        else if (key == "rank_widths")
            cfg.rank_widths = parse_counts(key, value);
        else if (key == "s")
            cfg.window = parse_count(key, value);
        else if (key == "h")
            cfg.hidden = parse_count(key, value);
        else if (key == "k")
            cfg.classes = parse_count(key, value);
        else if (key == "q")
            cfg.q = parse_real(key, value);
        else if (key == "lambda")
            cfg.lambda = parse_real(key, value);
        else if (key == "lr")
            cfg.lr = parse_real(key, value);
        else if (key == "epochs")
            cfg.epochs = parse_count(key, value);
        else if (key == "batch_size")
            cfg.batch_size = parse_count(key, value);
        else if (key == "seed")
            cfg.seed = parse_count(key, value);
        else if (key == "epsilon")
            cfg.epsilon = parse_real(key, value);
        else if (key == "K")
            cfg.top_k = parse_count(key, value);
        else if (key == "split_ratio")
            cfg.split_ratio = parse_real(key, value);
        else if (key == "zscore_columns")
            cfg.zscore_columns = split_list(value);
        else if (key == "lr_l1")
            cfg.lr_l1 = parse_real(key, value);
        else if (key == "lr_rate")
            cfg.lr_rate = parse_real(key, value);
        else if (key == "lr_epochs")
            cfg.lr_epochs = parse_count(key, value);
    }

    try {
        cfg.arch().validate();
        cfg.train().validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("config key ") + e.what());
    }
    if (!(cfg.epsilon > 0))
        throw UsageError("config key epsilon: must be positive");
    if (cfg.top_k == 0)
        throw UsageError("config key K: must be at least 1");
    if (!(cfg.split_ratio > 0 && cfg.split_ratio < 1))
        throw UsageError("config key split_ratio: must lie in (0, 1)");
    if (!cfg.zscore_columns.empty() && cfg.zscore_columns.size() != 5)
        throw UsageError("config key zscore_columns: exactly 5 columns are required");
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot read config " + path.string());
    return parse(in);
}

SchemaConfig RunConfig::schema_config() const
{
    return {fields, label, time_span};
}

ArchConfig RunConfig::arch() const
{
    return {time_span, dim, rank_widths, window, hidden, classes};
}

TrainConfig RunConfig::train() const
{
    return {q, lambda, lr, epochs, batch_size, seed};
}

LrConfig RunConfig::lr_config() const
{
    return {lr_l1, lr_rate, lr_epochs, seed};
}

PreparedData prepare_data(const std::filesystem::path& data, const SchemaConfig& load, double ratio,
                          std::uint64_t seed)
{
    if (load.fields.empty())
        throw UsageError("config key 'fields' is empty");
    PreparedData d;
    d.load = load_csv(data, load);
    if (d.load.samples.size() < 2)
        throw std::runtime_error(data.string() + ": fewer than 2 usable entities");
    d.split = split(d.load.samples, ratio, seed);
    d.schema = build_schema(d.split.train, load);
    d.train = normalize(d.split.train, d.schema);
    d.test = normalize(d.split.test, d.schema);
    return d;
}

void cmd_ingest(const IngestArgs& args, std::ostream& log)
{
    if (args.inputs.empty())
        throw UsageError("ingest: at least one --in file is required");
    const RunConfig cfg = RunConfig::load(args.config);
    struct Row {
        std::vector<std::string> cells;
        std::string label;
    };
    std::map<std::string, std::map<std::size_t, Row>> entities;
    for (std::size_t period = 0; period < args.inputs.size(); ++period) {
        std::ifstream in(args.inputs[period]);
        if (!in)
            throw std::runtime_error("cannot read " + args.inputs[period].string());
        csv::Reader reader(in);
        std::vector<std::string> header, row;
        if (!reader.next(header))
            continue;
        const auto column = [&](const std::string& name) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end())
                throw IngestionError(args.inputs[period].string() + ": missing column " + name);
            return std::size_t(it - header.begin());
        };
        const std::size_t id_col = column(cfg.entity_column), label_col = column(cfg.label);
        std::vector<std::size_t> field_cols;
        for (const FieldSpec& f : cfg.fields)
            field_cols.push_back(column(f.name));
        while (reader.next(row)) {
            row.resize(header.size());
            Row r;
            for (std::size_t c : field_cols)
                r.cells.push_back(row[c]);
            r.label = trim(row[label_col]);
            const std::string& id = row[id_col];
            if (!entities[id].emplace(period, std::move(r)).second)
                throw IngestionError("duplicate (entity, period) pair (" + id + ", " + std::to_string(period) +
                                     ") in " + args.inputs[period].string() + " line " +
                                     std::to_string(reader.line()));
        }
    }

    std::ofstream out = open_output(args.output);
    out << "entity_id,period_index";
    for (const FieldSpec& f : cfg.fields)
        out << ',' << csv::escape(f.name);
    out << ',' << csv::escape(cfg.label) << '\n';
    std::size_t rows = 0;
    for (const auto& [id, periods] : entities) {
        if (periods.rbegin()->second.label.empty())
            throw IngestionError("entity " + id + " has no label on its final period " +
                                 std::to_string(periods.rbegin()->first));
        for (const auto& [period, r] : periods) {
            out << csv::escape(id) << ',' << period;
            for (const std::string& cell : r.cells)
                out << ',' << csv::escape(cell);
            out << ',' << csv::escape(r.label) << '\n';
            ++rows;
        }
    }
    if (!out)
        throw std::runtime_error("failed writing " + args.output.string());
    log << "wrote " << rows << " rows for " << entities.size() << " entities to " << args.output.string() << '\n';
}

void cmd_synth(const SynthArgs& args, std::ostream& log)
{
    const auto samples = gen_synthetic_interaction(args.samples, args.time_span, args.noise, args.seed);
    const SchemaConfig cfg = synthetic_schema_config(args.time_span, args.noise);
    write_csv(args.output, samples, cfg);
    log << "wrote " << samples.size() << " entities to " << args.output.string() << '\n';
    if (args.config_out.empty())
        return;
    std::ofstream out = open_output(args.config_out);
    out << "# planted interaction: label = x1 * x2 > 0 at the final step\n";
    out << "data = " << args.output.string() << "\nfields = ";
    for (std::size_t i = 0; i < cfg.fields.size(); ++i)
        out << (i ? ", " : "") << cfg.fields[i].name << ':' << to_string(cfg.fields[i].kind);
    out << "\nT = " << args.time_span << "\nd = 8\nrank_widths = 8\ns = 1\nh = 32\nq = 0.7\nlambda = 0.001\n"
        << "lr = 0.01\nepochs = 30\nbatch_size = 1\nseed = " << args.seed << '\n';
}

EvalReport cmd_train(const TrainArgs& args, std::ostream& log)
{
    const RunConfig cfg = RunConfig::load(args.config);
    const auto path = data_path(args.data, cfg);
    PreparedData d = prepare_data(path, cfg.schema_config(), cfg.split_ratio, cfg.seed);
    log << "loaded " << d.load.samples.size() << " entities (" << d.load.dropped_entities << " dropped, "
        << d.load.row_errors.size() << " row errors); " << d.train.size() << " train / " << d.test.size()
        << " test; " << d.schema.size() << " fields\n";
    for (const std::string& w : d.schema.warnings)
        log << "warning: " << w << '\n';

    DeepCross model(d.schema, cfg.arch(), cfg.seed);
    const auto trace = train(model, d.train, cfg.train(), [&](const EpochStats& e) {
        log << "epoch " << e.epoch << " loss " << csv::format_double(e.mean_loss) << " train_acc "
            << csv::format_double(e.train_acc) << '\n';
    });

    CheckpointMeta meta{cfg.schema_config(), cfg.split_ratio, cfg.seed, cfg.train()};
    save_checkpoint(args.output, model, meta);
    const auto trace_path = args.trace.empty() ? std::filesystem::path(args.output.string() + ".loss.csv") : args.trace;
    std::ofstream trace_out = open_output(trace_path);
    write_loss_trace(trace_out, trace);
    log << "wrote " << args.output.string() << " and " << trace_path.string() << '\n';

    const EvalReport r = evaluate(model, d.test);
    print_report(log, r);
    return r;
}

void print_report(std::ostream& out, const EvalReport& r)
{
    const auto num = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << v;
        return s.str();
    };
    out << std::left << std::setw(8) << "tp" << std::setw(8) << "fp" << std::setw(8) << "fn" << std::setw(8) << "tn"
        << std::setw(8) << "acc" << std::setw(8) << "err1" << std::setw(8) << "err2" << "auc\n";
    out << std::setw(8) << r.tp << std::setw(8) << r.fp << std::setw(8) << r.fn << std::setw(8) << r.tn
        << std::setw(8) << num(r.acc) << std::setw(8) << num(r.err1) << std::setw(8) << num(r.err2)
        << (std::isnan(r.auc) ? std::string("n/a") : num(r.auc)) << "\n\n";
    out << "tp,fp,fn,tn,acc,err1,err2,auc\n"
        << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << ',' << csv::format_double(r.acc) << ','
        << csv::format_double(r.err1) << ',' << csv::format_double(r.err2) << ','
        << (std::isnan(r.auc) ? std::string() : csv::format_double(r.auc)) << '\n';
    out << std::right;
}

EvalReport cmd_eval(const EvalArgs& args, std::ostream& out)
{
    const Checkpoint ck = load_checkpoint(args.model);
    const PreparedData d = prepare_for(ck, args.data);
    const EvalReport r = evaluate(ck.model, select(d, args.split));
    print_report(out, r);
    if (!args.csv.empty()) {
        std::ofstream f = open_output(args.csv);
        print_report(f, r);
    }
    return r;
}

std::vector<std::filesystem::path> cmd_explain(const ExplainArgs& args, std::ostream& log)
{
    if (args.static_only == args.entity.has_value())
        throw UsageError("explain: pass exactly one of --entity or --static");
    const Checkpoint ck = load_checkpoint(args.model);
    const RunConfig cfg = args.config.empty() ? RunConfig{} : RunConfig::load(args.config);
    const PreparedData d = prepare_for(ck, args.data);
    const std::vector<std::string> names = ck.model.schema().names();

    const auto rank1 = rank1_weights(ck.model, d.test);
    const PatternSet omega = backtrack_patterns(ck.model, cfg.epsilon, rank1);
    std::vector<EntityReport> reports;
    if (args.entity) {
        const auto find = [&](const std::vector<EncodedSample>& v) -> const EncodedSample* {
            for (const EncodedSample& s : v)
                if (s.entity_id == *args.entity)
                    return &s;
            return nullptr;
        };
        const EncodedSample* s = find(d.test);
        if (!s)
            s = find(d.train);
        if (!s)
            throw std::runtime_error("unknown entity " + *args.entity);
        const SamplePrediction p = predict_sample(ck.model, *s);
        IndividualExplanation e = individual_explanation(p.feature, p.temporal, p.normalized, p.predicted,
                                                         cfg.top_k, omega.channel_patterns);
        if (!e.warning.empty())
            log << "warning: " << e.warning << '\n';
        log << "entity " << *args.entity << ": predicted class " << p.predicted << " (r = "
            << csv::format_double(p.normalized[p.predicted]) << ")\n";
        for (const ExplanationEntry& x : e.entries)
            log << "  t=" << x.time << " channel=" << x.channel << " [" << pattern_label(x.pattern, names)
                << "] score=" << csv::format_double(x.score) << '\n';
        reports.push_back({*args.entity, std::move(e), explanation_matrix(p.feature, p.temporal,
                                                                            p.normalized[p.predicted])});
    }
    const auto files = emit_reports(args.output, omega, reports, names);
    for (const auto& f : files)
        log << "wrote " << f.string() << '\n';
    return files;
}

EvalReport cmd_baseline(const BaselineArgs& args, std::ostream& out)
{
    const RunConfig cfg = RunConfig::load(args.config);
    const PreparedData d = prepare_data(data_path(args.data, cfg), cfg.schema_config(), cfg.split_ratio, cfg.seed);
    EvalReport r;
    if (args.which == "lr") {
        const LrModel m = lr_train(d.train, d.schema, cfg.lr_config());
        r = lr_evaluate(m, d.test, d.schema);
    } else if (args.which == "zscore") {
        if (cfg.zscore_columns.size() != 5)
            throw UsageError("zscore baseline needs config key zscore_columns with 5 numerical columns");
        std::vector<int> predicted, labels;
        std::vector<double> scores;
        for (const SequencedSample& s : d.split.test) {
            const ZScoreResult z = zscore_rate(zscore_inputs(s, cfg.schema_config(), cfg.zscore_columns));
            scores.push_back(z.score);
            predicted.push_back(z.positive ? 1 : 0);
            labels.push_back(s.label);
        }
        r = confusion_report(predicted, labels);
        if (r.tp + r.fn > 0 && r.tn + r.fp > 0)
            r.auc = auc(scores, labels);
    } else
        throw UsageError("--which must be zscore or lr, got " + args.which);
    print_report(out, r);
    return r;
}

GradCheckReport cmd_gradcheck(const GradcheckArgs& args, std::ostream& out)
{
    RunConfig cfg;
    cfg.time_span = 3;
    cfg.dim = 4;
    cfg.rank_widths = {4};
    cfg.window = 3;
    cfg.hidden = 5;
    if (!args.config.empty())
        cfg = RunConfig::load(args.config);
    if (args.fields < 3)
        throw UsageError("gradcheck: at least 3 fields are required");

    const auto samples = gen_synthetic_interaction(8, cfg.time_span, args.fields - 2, cfg.seed);
    const Schema schema = build_schema(samples, synthetic_schema_config(cfg.time_span, args.fields - 2));
    const auto encoded = normalize(samples, schema);
    DeepCross model(schema, cfg.arch(), cfg.seed);
    Rng rng(cfg.seed + 1);
    for (Param* p : model.params())
        if (p->name.rfind("attention.", 0) == 0)
            for (double& v : p->value.values())
                v = rng.uniform(-0.5, 0.5);
    std::vector<const EncodedSample*> batch;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, encoded.size()); ++i)
        batch.push_back(&encoded[i]);
    const TrainConfig tc = cfg.train();
    const GradCheckReport r = grad_check(
        [&](Tape& tape) { return objective(model, model.bind(tape), batch, tc); }, model.params(), 1e-4,
        args.tolerance);
    out << "parameters checked: " << r.entries << "\nmax relative error: " << r.max_rel_error << " (worst "
        << r.worst_param << '[' << r.worst_index << "], analytic " << r.worst_analytic << ", numeric "
        << r.worst_numeric << ")\n"
        << (r.max_rel_error <= args.tolerance ? "PASS" : "FAIL") << " tolerance " << args.tolerance << '\n';
    return r;
}

std::vector<SweepRow> cmd_sweep(const SweepArgs& args, std::ostream& out)
{
    if (args.axis != "rank" && args.axis != "timespan")
        throw UsageError("--axis must be rank or timespan, got " + args.axis);
    if (args.values.empty())
        throw UsageError("--values is empty");
    const RunConfig base = RunConfig::load(args.config);
    const auto path = data_path(args.data, base);
    std::vector<SweepRow> rows;
    for (std::size_t v : args.values) {
        RunConfig cfg = base;
        if (args.axis == "rank") {
            if (v == 0)
                throw UsageError("rank values start at 1");
            std::vector<std::size_t> widths;
            for (std::size_t i = 0; i + 1 < v; ++i)
                widths.push_back(base.rank_widths.empty() ? 8
                                                          : base.rank_widths[std::min(i, base.rank_widths.size() - 1)]);
            cfg.rank_widths = widths;
        } else {
            if (v == 0)
                throw UsageError("time span values start at 1");
            cfg.time_span = v;
            cfg.window = std::min(base.window, v % 2 ? v : v - 1);
        }
        const PreparedData d = prepare_data(path, cfg.schema_config(), cfg.split_ratio, cfg.seed);
        DeepCross model(d.schema, cfg.arch(), cfg.seed);
        train(model, d.train, cfg.train());
        const EvalReport r = evaluate(model, d.test);
        rows.push_back({v, r.acc, r.auc});
    }
    std::ostringstream csv_text;
    csv_text << "value,acc,auc\n";
    for (const SweepRow& r : rows)
        csv_text << r.value << ',' << csv::format_double(r.acc) << ','
                 << (std::isnan(r.auc) ? std::string() : csv::format_double(r.auc)) << '\n';
    if (args.output.empty())
        out << csv_text.str();
    else {
        std::ofstream f = open_output(args.output);
        f << csv_text.str();
        out << "wrote " << args.output.string() << '\n';
    }
    return rows;
}

} // namespace deepcross
