#include "doctest.h"

#include "deepcross/commands.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

using namespace deepcross;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("deepcross_cmd_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

RunConfig parse(const std::string& text)
{
    std::istringstream in(text);
    return RunConfig::parse(in);
}

// Small synthetic dataset plus a fast config next to it.
fs::path small_setup(const fs::path& dir)
{
    std::ostringstream log;
    SynthArgs s;
    s.output = dir / "syn.csv";
    s.samples = 120;
    s.config_out = dir / "syn.cfg";
    cmd_synth(s, log);
    std::ofstream(dir / "syn.cfg", std::ios::app) << "# overrides\n";
    std::string cfg = slurp(dir / "syn.cfg");
    cfg.replace(cfg.find("epochs = 30"), 11, "epochs = 2");
    write(dir / "syn.cfg", cfg);
    return dir / "syn.cfg";
}

} // namespace

TEST_CASE("config parsing")
{
    const RunConfig c = parse("# comment\nfields = a:num, b:cat ,c:multi\nT = 3\ns = 3\nrank_widths = 4, 2\n"
                              "lambda = 0.01 # trailing\nzscore_columns = a,a,a,a,a\n");
    CHECK(c.fields == std::vector<FieldSpec>{{"a", FieldKind::numerical},
                                             {"b", FieldKind::categorical},
                                             {"c", FieldKind::multi_valued}});
    CHECK(c.time_span == 3);
    CHECK(c.rank_widths == std::vector<std::size_t>{4, 2});
    CHECK(c.lambda == 0.01);
    CHECK(c.zscore_columns.size() == 5);
    CHECK(c.arch().rank() == 3);
    CHECK(parse("rank_widths = none").rank_widths.empty());

    const auto message = [](const std::string& text) {
        try {
            parse(text);
        } catch (const UsageError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("learning_rate = 1").find("learning_rate") != std::string::npos);
    CHECK(message("d = eight").find("'d'") != std::string::npos);
    CHECK(message("fields = a:text").find("fields") != std::string::npos);
    CHECK(message("T = 2\ns = 3").find("s") != std::string::npos);
    CHECK(message("q = 0").find("q") != std::string::npos);
    CHECK(message("d = 4\nd = 5").find("twice") != std::string::npos);
    CHECK(message("no equals sign").find("line 1") != std::string::npos);
    CHECK_FALSE(message("split_ratio = 1").empty());
    CHECK_FALSE(message("zscore_columns = a,b").empty());
    CHECK(config_keys().size() == 23);
}

TEST_CASE("ingest")
{
    const fs::path dir = scratch("ingest");
    write(dir / "cfg", "fields = x:num, c:cat\n");
    write(dir / "p0.csv", "entity_id,x,c,label\nA,1.5,u,\nB,2,v,\n");
    write(dir / "p1.csv", "label,c,x,entity_id,extra\n1,u,3,A,z\n0,w,,B,z\n");
    std::ostringstream log;
    cmd_ingest({{dir / "p0.csv", dir / "p1.csv"}, dir / "long.csv", dir / "cfg"}, log);
    CHECK(slurp(dir / "long.csv") ==
          "entity_id,period_index,x,c,label\nA,0,1.5,u,\nA,1,3,u,1\nB,0,2,v,\nB,1,,w,0\n");

    SchemaConfig sc;
    sc.fields = {{"x", FieldKind::numerical}, {"c", FieldKind::categorical}};
    sc.time_span = 2;
    const LoadResult r = load_csv(dir / "long.csv", sc);
    REQUIRE(r.samples.size() == 2);
    CHECK(r.samples[0].label == 1);

    SUBCASE("duplicate pair names entity and period")
    {
        write(dir / "dup.csv", "entity_id,x,c,label\nA,1,u,1\nA,2,u,1\n");
        try {
            cmd_ingest({{dir / "dup.csv"}, dir / "o.csv", dir / "cfg"}, log);
            FAIL("expected IngestionError");
        } catch (const IngestionError& e) {
            CHECK(std::string(e.what()).find("(A, 0)") != std::string::npos);
        }
    }
    SUBCASE("missing final label")
    {
        write(dir / "nolab.csv", "entity_id,x,c,label\nA,1,u,\n");
        CHECK_THROWS_AS(cmd_ingest({{dir / "nolab.csv"}, dir / "o.csv", dir / "cfg"}, log), IngestionError);
    }
    SUBCASE("missing column")
    {
        write(dir / "nocol.csv", "entity_id,x,label\nA,1,1\n");
        CHECK_THROWS_AS(cmd_ingest({{dir / "nocol.csv"}, dir / "o.csv", dir / "cfg"}, log), IngestionError);
    }
}

TEST_CASE("train, eval, explain")
{
    const fs::path dir = scratch("pipeline");
    const fs::path cfg = small_setup(dir);
    std::ostringstream log;

    const EvalReport a = cmd_train({{}, cfg, dir / "a.dcx", {}}, log);
    const EvalReport b = cmd_train({{}, cfg, dir / "b.dcx", dir / "b.csv"}, log);
    CHECK(slurp(dir / "a.dcx") == slurp(dir / "b.dcx"));
    CHECK(slurp(dir / "a.dcx.loss.csv") == slurp(dir / "b.csv"));
    CHECK(a.acc == b.acc);

    std::ostringstream out;
    const EvalReport e = cmd_eval({dir / "syn.csv", dir / "a.dcx", EvalSplit::test, dir / "m.csv"}, out);
    CHECK(e.tp == a.tp);
    CHECK(e.tn == a.tn);
    CHECK(e.tp + e.fp + e.fn + e.tn == 36);
    CHECK(out.str().find("tp,fp,fn,tn,acc,err1,err2,auc") != std::string::npos);
    CHECK(fs::exists(dir / "m.csv"));
    const EvalReport all = cmd_eval({dir / "syn.csv", dir / "a.dcx", EvalSplit::all, {}}, out);
    CHECK(all.tp + all.fp + all.fn + all.tn == 120);

    SUBCASE("data without the checkpoint's fields")
    {
        SynthArgs other;
        other.output = dir / "other.csv";
        other.samples = 50;
        other.noise = 1;
        cmd_synth(other, log);
        CHECK_THROWS_AS(cmd_eval({dir / "other.csv", dir / "a.dcx", EvalSplit::test, {}}, out),
                        std::runtime_error);
    }
    SUBCASE("explain one entity")
    {
        ExplainArgs x{dir / "syn.csv", dir / "a.dcx", cfg, std::string("syn003"), false, dir / "rep"};
        const auto files = cmd_explain(x, log);
        CHECK(files.size() == 3);
        CHECK(fs::exists(dir / "rep" / "heatmap_syn003.svg"));
        const std::string csv = slurp(dir / "rep" / "explain_syn003.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    }
    SUBCASE("static explanation")
    {
        ExplainArgs x{dir / "syn.csv", dir / "a.dcx", {}, std::nullopt, true, dir / "st"};
        CHECK(cmd_explain(x, log).size() == 1);
    }
    SUBCASE("explain needs exactly one mode")
    {
        ExplainArgs x{dir / "syn.csv", dir / "a.dcx", {}, std::nullopt, false, dir / "st"};
        CHECK_THROWS_AS(cmd_explain(x, log), UsageError);
        x.entity = "nobody";
        CHECK_THROWS_AS(cmd_explain(x, log), std::runtime_error);
    }
}

TEST_CASE("baselines and sweep")
{
    const fs::path dir = scratch("sweep");
    const fs::path cfg = small_setup(dir);
    std::ostringstream out;
    const EvalReport lr = cmd_baseline({{}, cfg, "lr"}, out);
    CHECK(lr.tp + lr.fp + lr.fn + lr.tn == 36);
    CHECK_THROWS_AS(cmd_baseline({{}, cfg, "zscore"}, out), UsageError);
    std::ofstream(cfg, std::ios::app) << "zscore_columns = x1, x2, noise1, noise2, x1\n";
    const EvalReport z = cmd_baseline({{}, cfg, "zscore"}, out);
    CHECK(z.tp + z.fp + z.fn + z.tn == 36);

    const auto rows = cmd_sweep({{}, cfg, "rank", {1, 2, 3}, dir / "rank.csv"}, out);
    CHECK(rows.size() == 3);
    const std::string csv = slurp(dir / "rank.csv");
    CHECK(csv.rfind("value,acc,auc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(cmd_sweep({{}, cfg, "timespan", {1, 2}, {}}, out).size() == 2);
    CHECK_THROWS_AS(cmd_sweep({{}, cfg, "depth", {1}, {}}, out), UsageError);
}

TEST_CASE("gradcheck command")
{
    std::ostringstream out;
    const GradCheckReport r = cmd_gradcheck({}, out);
    CHECK(r.passed);
    CHECK(r.max_rel_error <= 1e-3);
    CHECK(out.str().find("max relative error") != std::string::npos);
}
