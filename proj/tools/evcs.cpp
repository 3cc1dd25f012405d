#include "evcs/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace evcs;
namespace pl = evcs::pipeline;

// Flag values are parsed after CLI11 is done, so a bad value must still map
// to the usage exit code.
template <class F>
auto parse_flag(std::string const& flag, F&& parse)
{
    try {
        return parse();
    } catch (ValidationError const& e) {
        throw IoError("--" + flag + ": " + e.what());
    }
}

void print_report(pl::StageReport const& r, bool json)
{
    if (json) {
        std::cout << r.to_json().dump() << '\n';
        return;
    }
    std::cout << r.stage << (r.validation_failed ? ": validation failed\n" : ": ok\n");
    for (auto const& a : r.artifacts) {
        std::cout << "  " << a << '\n';
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"EV charging station choice modelling and siting"};
    app.require_subcommand(1);

    std::string data_dir = "data";
    std::string work_dir = "work";
    std::string config_path;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    bool json = false;
    app.add_option("--data", data_dir, "input data directory");
    app.add_option("--work", work_dir, "artifact directory");
    app.add_option("--config", config_path, "key = value configuration file (default <data>/config.txt)");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--jobs", jobs, "worker cap")->check(CLI::PositiveNumber);
    app.add_flag("--json", json, "print a JSON run summary");

    std::string model = "mnl";
    std::string level = "L2";
    std::string spec = "distance";
    std::size_t p = 25;
    bool no_existing = false;
    std::string out;

    auto* synth = app.add_subcommand("synth", "write a synthetic input set into --data");
    auto* classify = app.add_subcommand("classify", "classify accounts and keep private in-region users");
    auto* encode = app.add_subcommand("encode", "build choice observations");
    encode->add_option("--level", level, "L2 or L3");
    auto* estimate = app.add_subcommand("estimate", "cross-validated model estimation");
    estimate->add_option("--model", model, "mnl or mxl");
    estimate->add_option("--level", level, "L2 or L3");
    auto* validate = app.add_subcommand("validate", "validation indicators and parameter ratios");
    validate->add_option("--model", model, "mnl or mxl");
    validate->add_option("--level", level, "L2 or L3");
    auto* simulate = app.add_subcommand("simulate", "customer-station utility matrix");
    simulate->add_option("--spec,--utilities", spec, "distance, mnl, mxl-mean or mxl-25");
    auto* optimize = app.add_subcommand("optimize", "solve one siting instance");
    auto* milp = app.add_subcommand("export-milp", "write the siting model as an LP file");
    for (auto* sc : {optimize, milp}) {
        sc->add_option("--model", model, "pmedian or maxmin");
        sc->add_option("--utilities,--spec", spec, "distance, mnl, mxl-mean or mxl-25");
        sc->add_option("--p", p, "number of new stations");
        sc->add_flag("--no-existing", no_existing, "ignore existing stations");
    }
    milp->add_option("--out", out, "output path relative to --work");
    auto* compare = app.add_subcommand("compare", "full siting grid and gap matrices");

    try {
        app.parse(argc, argv);
    } catch (CLI::CallForHelp const& e) {
        return app.exit(e);
    } catch (CLI::ParseError const& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        pl::Context ctx;
        ctx.data_dir = data_dir;
        ctx.work_dir = work_dir;
        ctx.seed = seed;
        ctx.jobs = jobs;
        if (!synth->parsed()) {
            const auto path = config_path.empty() ? ctx.data_dir / "config.txt" : std::filesystem::path(config_path);
            ctx.config = Config::load(path);
        } else if (!config_path.empty()) {
            ctx.config = Config::load(config_path);
        }

        pl::SitingRequest req;
        if (optimize->parsed() || milp->parsed()) {
            req.model = parse_flag("model", [&] { return parse_siting_model(model); });
            req.spec = parse_flag("utilities", [&] { return parse_utility_spec(spec); });
            req.p = p;
            req.consider_existing = !no_existing;
        }
        auto lvl = [&] { return parse_flag("level", [&] { return parse_level(level); }); };
        auto kind = [&] { return parse_flag("model", [&] { return parse_model_kind(model); }); };

        pl::StageReport r;
        if (synth->parsed()) {
            r = pl::run_synth(ctx);
        } else if (classify->parsed()) {
            r = pl::run_classify(ctx);
        } else if (encode->parsed()) {
            r = pl::run_encode(ctx, lvl());
        } else if (estimate->parsed()) {
            r = pl::run_estimate(ctx, kind(), lvl());
        } else if (validate->parsed()) {
            r = pl::run_validate(ctx, kind(), lvl());
        } else if (simulate->parsed()) {
            r = pl::run_simulate(ctx, parse_flag("spec", [&] { return parse_utility_spec(spec); }));
        } else if (optimize->parsed()) {
            r = pl::run_optimize(ctx, req);
        } else if (milp->parsed()) {
            r = pl::run_export_milp(ctx, req, out);
        } else if (compare->parsed()) {
            r = pl::run_compare(ctx);
        }
        print_report(r, json);
        return r.validation_failed ? 1 : 0;
    } catch (IoError const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (ValidationError const& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 1;
    } catch (std::filesystem::filesystem_error const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
