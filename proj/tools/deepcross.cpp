#include "deepcross/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace deepcross;

int main(int argc, char** argv)
{
    CLI::App app{"DeepCross: explainable feature-crossing network for sequential risk data"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Merge per-period wide CSVs into the long format");
    c_ingest->add_option("--in", ingest.inputs, "Wide CSV per period, oldest first")->required()->check(CLI::ExistingFile);
    c_ingest->add_option("--out", ingest.output, "Long-format CSV to write")->required();
    c_ingest->add_option("--config", ingest.config, "Run config naming fields and label")->required();

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write the planted-interaction synthetic dataset");
    c_synth->add_option("--out", synth.output, "CSV to write")->required();
    c_synth->add_option("--samples", synth.samples, "Number of entities")->capture_default_str();
    c_synth->add_option("--T", synth.time_span, "Steps per entity")->capture_default_str();
    c_synth->add_option("--noise", synth.noise, "Extra noise fields")->capture_default_str();
    c_synth->add_option("--seed", synth.seed)->capture_default_str();
    c_synth->add_option("--config-out", synth.config_out, "Also write a matching run config");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
    c_train->add_option("--config", tr.config)->required()->check(CLI::ExistingFile);
    c_train->add_option("--data", tr.data, "Overrides the config's data key");
    c_train->add_option("--out", tr.output, "Checkpoint path")->required();
    c_train->add_option("--trace", tr.trace, "Loss trace CSV (default <out>.loss.csv)");

    EvalArgs ev;
    std::string split_name = "test";
    auto* c_eval = app.add_subcommand("eval", "Confusion metrics and AUC of a checkpoint");
    c_eval->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
    c_eval->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
    c_eval->add_option("--split", split_name)->check(CLI::IsMember({"test", "train", "all"}))->capture_default_str();
    c_eval->add_option("--csv", ev.csv, "Also write the metrics CSV here");

    ExplainArgs ex;
    std::string entity;
    auto* c_explain = app.add_subcommand("explain", "Combination patterns and individual explanations");
    c_explain->add_option("--data", ex.data)->required()->check(CLI::ExistingFile);
    c_explain->add_option("--model", ex.model)->required()->check(CLI::ExistingFile);
    c_explain->add_option("--config", ex.config, "Supplies epsilon and K");
    auto* o_entity = c_explain->add_option("--entity", entity, "Explain one entity");
    auto* o_static = c_explain->add_flag("--static", ex.static_only, "Only the global pattern list");
    o_entity->excludes(o_static);
    c_explain->add_option("--out", ex.output, "Report directory")->capture_default_str();

    BaselineArgs bl;
    auto* c_base = app.add_subcommand("baseline", "Z-Score or L1 logistic regression baseline");
    c_base->add_option("--config", bl.config)->required()->check(CLI::ExistingFile);
    c_base->add_option("--data", bl.data, "Overrides the config's data key");
    c_base->add_option("--which", bl.which)->check(CLI::IsMember({"zscore", "lr"}))->capture_default_str();

    GradcheckArgs gc;
    auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of the full objective");
    c_grad->add_option("--config", gc.config, "Architecture knobs");
    c_grad->add_option("--fields", gc.fields)->capture_default_str();
    c_grad->add_option("--tolerance", gc.tolerance)->capture_default_str();

    SweepArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "Retrain across crossing ranks or time spans");
    c_sweep->add_option("--config", sw.config)->required()->check(CLI::ExistingFile);
    c_sweep->add_option("--data", sw.data, "Overrides the config's data key");
    c_sweep->add_option("--axis", sw.axis)->check(CLI::IsMember({"rank", "timespan"}))->required();
    c_sweep->add_option("--values", sw.values)->delimiter(',')->required();
    c_sweep->add_option("--out", sw.output, "CSV path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_ingest)
            cmd_ingest(ingest, std::cout);
        else if (*c_synth)
            cmd_synth(synth, std::cout);
        else if (*c_train)
            cmd_train(tr, std::cout);
        else if (*c_eval) {
            ev.split = split_name == "train" ? EvalSplit::train : split_name == "all" ? EvalSplit::all : EvalSplit::test;
            cmd_eval(ev, std::cout);
        } else if (*c_explain) {
            if (*o_entity)
                ex.entity = entity;
            cmd_explain(ex, std::cout);
        } else if (*c_base)
            cmd_baseline(bl, std::cout);
        else if (*c_grad) {
            if (!cmd_gradcheck(gc, std::cout).passed)
                return 1;
        } else if (*c_sweep)
            cmd_sweep(sw, std::cout);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
