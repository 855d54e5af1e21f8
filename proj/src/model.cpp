#include "deepcross/model.hpp"

#include "deepcross/csv.hpp"
#include "deepcross/ops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

namespace deepcross {

void ArchConfig::validate() const
{
    const auto require = [](bool ok, const std::string& key, const std::string& why) {
        if (!ok)
            throw std::invalid_argument(key + ": " + why);
    };
    require(time_span >= 1, "T", "must be at least 1");
    require(dim >= 1, "d", "must be at least 1");
    require(hidden >= 1, "h", "must be at least 1");
    require(classes >= 2, "k", "must be at least 2");
    for (std::size_t w : rank_widths)
        require(w >= 1, "rank_widths", "every width must be at least 1");
    require(window % 2 == 1, "s", "must be odd");
    require(window <= time_span, "s", "must not exceed T");
}

void TrainConfig::validate() const
{
    if (!(q > 0.0 && q <= 1.0))
        throw std::invalid_argument("q: must lie in (0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("lambda: must be finite and non-negative");
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("lr: must be finite and non-negative");
    if (batch_size == 0)
        throw std::invalid_argument("batch_size: must be at least 1");
}

DeepCross::DeepCross(Schema schema, ArchConfig arch, std::uint64_t seed)
    : schema_(std::move(schema)), arch_(std::move(arch))
{
    arch_.validate();
    Rng rng(seed);
    embedding_ = EmbeddingLayer(schema_, arch_.dim, rng);
    const std::size_t n1 = schema_.size();
    std::size_t prev = n1;
    for (std::size_t i = 0; i < arch_.rank_widths.size(); ++i) {
        blocks_.emplace_back(i + 2, n1, prev, arch_.rank_widths[i], arch_.time_span, rng);
        prev = arch_.rank_widths[i];
    }
    feature_ = FeatureAttention(channels(), arch_.time_span, arch_.dim);
    temporal_ = TemporalAttention(arch_.window, channels(), arch_.dim, arch_.time_span);
    gru_ = Gru(arch_.hidden, channels() * arch_.dim, rng);
    const double bound = 1.0 / std::sqrt(double(arch_.hidden));
    Tensor w(Shape{arch_.classes, arch_.hidden});
    for (double& v : w.values())
        v = rng.uniform(-bound, bound);
    output_ = Param("output.projection", std::move(w));
}

std::size_t DeepCross::channels() const
{
    return std::accumulate(arch_.rank_widths.begin(), arch_.rank_widths.end(), schema_.size());
}

ModelWeights DeepCross::bind(Tape& tape)
{
    ModelWeights w;
    w.embedding = embedding_.bind(tape);
    for (CrossingBlock& b : blocks_)
        w.crossing.push_back(b.bind(tape));
    w.feature = feature_.bind(tape);
    w.temporal = temporal_.bind(tape);
    w.gru = gru_.bind(tape);
    w.output = tape.param(output_);
    return w;
}

ModelWeights DeepCross::bind_frozen(Tape& tape) const
{
    ModelWeights w;
    w.embedding = embedding_.bind_frozen(tape);
    for (const CrossingBlock& b : blocks_)
        w.crossing.push_back(b.bind_frozen(tape));
    w.feature = feature_.bind_frozen(tape);
    w.temporal = temporal_.bind_frozen(tape);
    w.gru = gru_.bind_frozen(tape);
    w.output = tape.frozen(output_.value);
    return w;
}

Forward DeepCross::forward(const ModelWeights& w, const EncodedSample& sample) const
{
    if (sample.time_span() != arch_.time_span)
        throw DimensionError("forward: sample has " + std::to_string(sample.time_span()) + " steps, model expects " +
                             std::to_string(arch_.time_span));
    if (sample.label < 0 || std::size_t(sample.label) >= arch_.classes)
        throw std::out_of_range("forward: label " + std::to_string(sample.label) + " outside 0.." +
                                std::to_string(arch_.classes - 1));
    Tape& tape = w.output.tape();
    const Var raw = embedding_.embed(w.embedding, sample);
    const RankStack stack = run_stack(raw, w.crossing);
    const AttentionOutput f = feature_attention(stack.concatenated, w.feature);
    const AttentionOutput t = temporal_attention(f.output, w.temporal);
    const auto steps = time_concat(t.output);
    const Var h = gru_forward(steps, w.gru, tape.constant(Tensor(Shape{arch_.hidden})));
    const Prediction p = predict(h, w.output);
    return {p.scores, p.normalized, f.scores, t.scores};
}

std::vector<Param*> DeepCross::params()
{
    std::vector<Param*> out = embedding_.params();
    for (CrossingBlock& b : blocks_)
        for (Param* p : b.params())
            out.push_back(p);
    out.push_back(&feature_.weight());
    out.push_back(&temporal_.weight());
    for (Param* p : gru_.params())
        out.push_back(p);
    out.push_back(&output_);
    return out;
}

std::vector<const Param*> DeepCross::params() const
{
    const auto mutable_params = const_cast<DeepCross*>(this)->params();
    return {mutable_params.begin(), mutable_params.end()};
}

Var objective(const DeepCross& model, const ModelWeights& w, std::span<const EncodedSample* const> batch,
              const TrainConfig& cfg)
{
    if (batch.empty())
        throw std::invalid_argument("objective: empty batch");
    std::vector<Var> losses;
    losses.reserve(batch.size());
    for (const EncodedSample* s : batch)
        losses.push_back(lq_loss(model.forward(w, *s).normalized, std::size_t(s->label), cfg.q));
    Var total = scale(sum(losses.size() == 1 ? losses.front() : concat(losses, 0)), 1.0 / double(batch.size()));
    if (cfg.lambda > 0.0 && !w.crossing.empty())
        total = add(total, scale(lasso_penalty(w.crossing), cfg.lambda));
    return total;
}

namespace {

std::size_t argmax(std::span<const double> v)
{
    return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace

std::vector<EpochStats> train(DeepCross& model, std::span<const EncodedSample> samples, const TrainConfig& cfg,
                              const EpochCallback& on_epoch)
{
    cfg.validate();
    if (samples.empty())
        throw std::invalid_argument("train: no training samples");
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    const std::vector<Param*> params = model.params();
    std::vector<EpochStats> trace;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<const EncodedSample*> batch;
            for (std::size_t i = begin; i < end; ++i)
                batch.push_back(&samples[order[i]]);

            Tape tape;
            const ModelWeights w = model.bind(tape);
            std::vector<Var> losses;
            for (const EncodedSample* s : batch) {
                const Forward f = model.forward(w, *s);
                correct += argmax(f.normalized.value().values()) == std::size_t(s->label);
                losses.push_back(lq_loss(f.normalized, std::size_t(s->label), cfg.q));
            }
            const Var data_loss = sum(losses.size() == 1 ? losses.front() : concat(losses, 0));
            Var total = scale(data_loss, 1.0 / double(batch.size()));
            if (cfg.lambda > 0.0 && !w.crossing.empty())
                total = add(total, scale(lasso_penalty(w.crossing), cfg.lambda));
            const double batch_loss = data_loss.value()[0];
            if (!std::isfinite(total.value()[0]))
                throw TrainingDiverged("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                       ", batch starting at " + std::to_string(begin));
            loss_sum += batch_loss;
            tape.backward(total);
            sgd_step(params, cfg.lr);
            zero_grads(params);
        }
        const EpochStats stats{epoch, loss_sum / double(samples.size()), double(correct) / double(samples.size())};
        trace.push_back(stats);
        if (on_epoch)
            on_epoch(stats);
    }
    return trace;
}

void write_loss_trace(std::ostream& out, std::span<const EpochStats> trace)
{
    out << "epoch,mean_loss,train_acc\n";
    for (const EpochStats& e : trace)
        out << e.epoch << ',' << csv::format_double(e.mean_loss) << ',' << csv::format_double(e.train_acc) << '\n';
}

SamplePrediction predict_sample(const DeepCross& model, const EncodedSample& sample)
{
    Tape tape;
    const Forward f = model.forward(model.bind_frozen(tape), sample);
    SamplePrediction p;
    const auto copy = [](const Var& v) {
        const auto vals = v.value().values();
        return std::vector<double>(vals.begin(), vals.end());
    };
    p.normalized = copy(f.normalized);
    p.feature = copy(f.feature);
    p.temporal = copy(f.temporal);
    p.predicted = argmax(copy(f.scores));
    return p;
}

EvalReport confusion_report(std::span<const int> predicted, std::span<const int> labels)
{
    if (predicted.size() != labels.size())
        throw std::invalid_argument("confusion_report: length mismatch");
    if (labels.empty())
        throw std::invalid_argument("confusion_report: no samples");
    EvalReport r;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pos = labels[i] == 1, hit = predicted[i] == 1;
        (pos ? (hit ? r.tp : r.fn) : (hit ? r.fp : r.tn)) += 1;
    }
    r.acc = double(r.tp + r.tn) / double(labels.size());
    r.err1 = r.tn + r.fp ? double(r.fp) / double(r.tn + r.fp) : 0.0;
    r.err2 = r.fn + r.tp ? double(r.fn) / double(r.fn + r.tp) : 0.0;
    r.auc = std::nan("");
    return r;
}

double auc(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc: length mismatch");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]])
            ++j;
        const double midrank = 0.5 * double(i + 1 + j);
        for (std::size_t r = i; r < j; ++r)
            if (labels[idx[r]] == 1) {
                pos_rank_sum += midrank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc: undefined unless both classes are present");
    return (pos_rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) / (double(n_pos) * double(n_neg));
}

EvalReport evaluate(const DeepCross& model, std::span<const EncodedSample> samples)
{
    if (samples.empty())
        throw std::invalid_argument("evaluate: no samples");
    std::vector<int> predicted, labels;
    std::vector<double> positive;
    for (const EncodedSample& s : samples) {
        const SamplePrediction p = predict_sample(model, s);
        predicted.push_back(int(p.predicted));
        labels.push_back(s.label);
        positive.push_back(p.normalized.at(1));
    }
    EvalReport r = confusion_report(predicted, labels);
    if (r.tp + r.fn > 0 && r.tn + r.fp > 0)
        r.auc = auc(positive, labels);
    return r;
}

// Checkpoint layout, all little-endian:
//   "DCRS1" | u64 schema hash | schema | load config | f64 split ratio | u64 split seed
//   | arch config | train config | u32 param count | params
namespace {

constexpr char kMagic[5] = {'D', 'C', 'R', 'S', '1'};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void u64(std::uint64_t v)
    {
        char b[8];
        for (int i = 0; i < 8; ++i)
            b[i] = char((v >> (8 * i)) & 0xff);
        out_.write(b, 8);
    }
    void u32(std::uint32_t v)
    {
        char b[4];
        for (int i = 0; i < 4; ++i)
            b[i] = char((v >> (8 * i)) & 0xff);
        out_.write(b, 4);
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s)
    {
        u32(std::uint32_t(s.size()));
        out_.write(s.data(), std::streamsize(s.size()));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t n)
    {
        if (!in_.read(dst, std::streamsize(n)))
            throw CheckpointError("checkpoint: unexpected end of file");
    }
    std::uint64_t u64()
    {
        unsigned char b[8];
        bytes(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i)
            v = (v << 8) | b[i];
        return v;
    }
    std::uint32_t u32()
    {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | b[i];
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str()
    {
        const std::uint32_t n = u32();
        if (n > (1u << 24))
            throw CheckpointError("checkpoint: implausible string length");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

private:
    std::istream& in_;
};

FieldKind kind_from(std::uint32_t v)
{
    if (v > 2)
        throw CheckpointError("checkpoint: bad field kind");
    return FieldKind(v);
}

} // namespace

void save_checkpoint(std::ostream& out, const DeepCross& model, const CheckpointMeta& meta)
{
    Writer w(out);
    out.write(kMagic, 5);
    const Schema& schema = model.schema();
    w.u64(schema.hash());

    w.u32(std::uint32_t(schema.fields.size()));
    for (const FeatureField& f : schema.fields) {
        w.str(f.name);
        w.u32(std::uint32_t(f.kind));
        w.u64(f.source);
        w.u32(std::uint32_t(f.vocab.size()));
        for (const std::string& v : f.vocab)
            w.str(v);
        w.f64(f.mean);
        w.f64(f.std);
    }
    w.u32(std::uint32_t(schema.dropped.size()));
    for (const std::string& d : schema.dropped)
        w.str(d);

    w.u32(std::uint32_t(meta.load.fields.size()));
    for (const FieldSpec& f : meta.load.fields) {
        w.str(f.name);
        w.u32(std::uint32_t(f.kind));
    }
    w.str(meta.load.label_column);
    w.u64(meta.load.time_span);
    w.f64(meta.split_ratio);
    w.u64(meta.split_seed);

    const ArchConfig& a = model.arch();
    w.u64(a.time_span);
    w.u64(a.dim);
    w.u32(std::uint32_t(a.rank_widths.size()));
    for (std::size_t r : a.rank_widths)
        w.u64(r);
    w.u64(a.window);
    w.u64(a.hidden);
    w.u64(a.classes);

    const TrainConfig& t = meta.train;
    w.f64(t.q);
    w.f64(t.lambda);
    w.f64(t.lr);
    w.u64(t.epochs);
    w.u64(t.batch_size);
    w.u64(t.seed);

    const auto params = model.params();
    w.u32(std::uint32_t(params.size()));
    for (const Param* p : params) {
        w.str(p->name);
        w.u32(std::uint32_t(p->value.rank()));
        for (std::size_t e : p->value.shape())
            w.u64(e);
        for (double v : p->value.values())
            w.f64(v);
    }
    if (!out)
        throw CheckpointError("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, const DeepCross& model, const CheckpointMeta& meta)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw CheckpointError("cannot open " + path.string() + " for writing");
    save_checkpoint(out, model, meta);
}

Checkpoint load_checkpoint(std::istream& in)
{
    Reader r(in);
    char magic[5];
    r.bytes(magic, 5);
    if (!std::equal(magic, magic + 5, kMagic))
        throw CheckpointError("checkpoint: bad magic");
    const std::uint64_t hash = r.u64();

    Schema schema;
    schema.fields.resize(r.u32());
    for (FeatureField& f : schema.fields) {
        f.name = r.str();
        f.kind = kind_from(r.u32());
        f.source = r.u64();
        f.vocab.resize(r.u32());
        for (std::string& v : f.vocab)
            v = r.str();
        f.mean = r.f64();
        f.std = r.f64();
    }
    schema.dropped.resize(r.u32());
    for (std::string& d : schema.dropped)
        d = r.str();
    if (schema.hash() != hash)
        throw CheckpointError("checkpoint: schema hash mismatch");

    CheckpointMeta meta;
    meta.load.fields.resize(r.u32());
    for (FieldSpec& f : meta.load.fields) {
        f.name = r.str();
        f.kind = kind_from(r.u32());
    }
    meta.load.label_column = r.str();
    meta.load.time_span = r.u64();
    meta.split_ratio = r.f64();
    meta.split_seed = r.u64();

    ArchConfig a;
    a.time_span = r.u64();
    a.dim = r.u64();
    a.rank_widths.resize(r.u32());
    for (std::size_t& w : a.rank_widths)
        w = r.u64();
    a.window = r.u64();
    a.hidden = r.u64();
    a.classes = r.u64();

    TrainConfig& t = meta.train;
    t.q = r.f64();
    t.lambda = r.f64();
    t.lr = r.f64();
    t.epochs = r.u64();
    t.batch_size = r.u64();
    t.seed = r.u64();

    Checkpoint ck{DeepCross(std::move(schema), a, 0), meta};
    std::map<std::string, Param*> by_name;
    for (Param* p : ck.model.params())
        by_name[p->name] = p;
    const std::uint32_t count = r.u32();
    if (count != by_name.size())
        throw CheckpointError("checkpoint: expected " + std::to_string(by_name.size()) + " parameters, found " +
                              std::to_string(count));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw CheckpointError("checkpoint: unknown parameter " + name);
        Shape shape(r.u32());
        for (std::size_t& e : shape)
            e = r.u64();
        Param& p = *it->second;
        if (shape != p.value.shape())
            throw CheckpointError("checkpoint: parameter " + name + " has shape " + shape_string(shape) +
                                  ", architecture expects " + shape_string(p.value.shape()));
        for (double& v : p.value.values())
            v = r.f64();
        by_name.erase(it);
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint " + path.string());
    return load_checkpoint(in);
}

} // namespace deepcross
