#include "cli.hpp"

#include "sweep.hpp"

#include "moek/error.hpp"
#include "moek/numkit/matrix_io.hpp"
#include "moek/placement/placement.hpp"
#include "moek/quant/layer.hpp"
#include "moek/quant/pack.hpp"
#include "moek/sim/sim.hpp"
#include "moek/trace/trace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace moek::cli {

namespace {

using Resolved = std::map<std::string, std::string>;

std::string num(double v)
{
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v); // shortest round-trip form
    return std::string(buf, r.ptr);
}

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open '" + path + "' for writing");
    f << text;
    if (!f.flush())
        throw IoError("write to '" + path + "' failed");
}

void emit(std::ostream& out, const std::string& path, const std::string& text)
{
    if (path.empty())
        out << text;
    else
        write_file(path, text);
}

std::string option_value(const CLI::Option* opt)
{
    std::string v;
    if (opt->count() > 0) {
        const auto& res = opt->results();
        for (std::size_t i = 0; i < res.size(); ++i)
            v += (i ? "," : "") + res[i];
        return v;
    }
    v = opt->get_default_str();
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']')
        v = v.substr(1, v.size() - 2);
    if (v.empty() && opt->get_expected_max() == 0)
        v = "false";
    return v;
}

// First output line: every effective parameter, in a form that can be pasted
// back as a command line.
std::string echo_line(const CLI::App* sub, const Resolved& resolved)
{
    std::string s = "# moek " + sub->get_name();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_name();
        if (name == "--help" || name == "--config")
            continue;
        const auto it = resolved.find(name);
        const std::string v = it != resolved.end() ? it->second : option_value(opt);
        if (v.empty())
            continue;
        s += ' ' + name + '=';
        s += v.find_first_of(" \t'\"") == std::string::npos ? v : "'" + v + "'";
    }
    return s + '\n';
}

// Applies `--config file.json` by appending `--key=value` for every key the
// user did not already pass, so explicit flags win.
void apply_config(CLI::App& app, std::vector<std::string>& args)
{
    if (args.empty())
        return;
    CLI::App* sub = nullptr;
    try {
        sub = app.get_subcommand(args[0]);
    } catch (const CLI::Error&) {
        return; // CLI11 reports the unknown subcommand
    }
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            path = args[i].substr(9);
    }
    if (path.empty())
        return;

    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    if (!doc.is_object())
        throw ParseError("config '" + path + "' must hold a JSON object");

    for (const auto& [key, value] : doc.items()) {
        std::string name = "--" + key;
        std::replace(name.begin() + 2, name.end(), '_', '-');
        if (name == "--config" || sub->get_option_no_throw(name) == nullptr)
            throw ConfigError("config '" + path + "': '" + key + "' is not an option of '" + args[0] + "'");
        const bool given = std::any_of(args.begin() + 1, args.end(), [&](const std::string& a) {
            return a == name || a.rfind(name + "=", 0) == 0;
        });
        if (given || value.is_null())
            continue;
        auto scalar = [](const nlohmann::json& v) {
            if (v.is_string())
                return v.get<std::string>();
            if (v.is_boolean())
                return std::string(v.get<bool>() ? "true" : "false");
            if (v.is_number())
                return v.dump();
            throw ParseError("config values must be scalars or arrays of scalars");
        };
        std::string text;
        if (value.is_array()) {
            for (std::size_t i = 0; i < value.size(); ++i)
                text += (i ? "," : "") + scalar(value[i]);
        } else {
            text = scalar(value);
        }
        args.push_back(name + "=" + text);
    }
}

// ---- shared option groups --------------------------------------------------

struct CostArgs
{
    std::string file;
    sim::SimConfig defaults;
    double cpu = defaults.cost.latency_cpu_ms;
    double gpu = defaults.cost.latency_gpu_ms;
    double bytes = defaults.cost.expert_bytes;
    double bw = defaults.cost.pcie_bw_bytes_per_ms;
    double ret = defaults.cost.activation_return_ms;
    std::size_t cache = defaults.cache_capacity;
    CLI::Option* o_cpu = nullptr;
    CLI::Option* o_gpu = nullptr;
    CLI::Option* o_bytes = nullptr;
    CLI::Option* o_bw = nullptr;
    CLI::Option* o_ret = nullptr;
    CLI::Option* o_cache = nullptr;

    void add(CLI::App* sub)
    {
        sub->add_option("--cost", file, "Cost config JSON (keys latency_cpu_ms, latency_gpu_ms, expert_bytes, "
                                        "pcie_bw_bytes_per_ms, activation_return_ms, cache_capacity)");
        o_cpu = sub->add_option("--latency-cpu-ms", cpu, "CPU time per token per expert (ms); inf forces offload");
        o_gpu = sub->add_option("--latency-gpu-ms", gpu, "GPU time per token per expert (ms)");
        o_bytes = sub->add_option("--expert-bytes", bytes, "Bytes moved per expert transfer");
        o_bw = sub->add_option("--pcie-bw", bw, "Host-to-device bandwidth (bytes/ms)");
        o_ret = sub->add_option("--activation-return-ms", ret, "Time to return CPU results (ms)");
        o_cache = sub->add_option("--cache-capacity", cache, "GPU expert cache slots");
    }

    sim::SimConfig resolve(Resolved& echo) const
    {
        sim::SimConfig c = file.empty() ? defaults : sim::read_sim_config(file, defaults);
        if (o_cpu->count())
            c.cost.latency_cpu_ms = cpu;
        if (o_gpu->count())
            c.cost.latency_gpu_ms = gpu;
        if (o_bytes->count())
            c.cost.expert_bytes = bytes;
        if (o_bw->count())
            c.cost.pcie_bw_bytes_per_ms = bw;
        if (o_ret->count())
            c.cost.activation_return_ms = ret;
        if (o_cache->count())
            c.cache_capacity = cache;
        c.cost.validate();
        echo["--cost"] = "";
        echo["--latency-cpu-ms"] = num(c.cost.latency_cpu_ms);
        echo["--latency-gpu-ms"] = num(c.cost.latency_gpu_ms);
        echo["--expert-bytes"] = num(c.cost.expert_bytes);
        echo["--pcie-bw"] = num(c.cost.pcie_bw_bytes_per_ms);
        echo["--activation-return-ms"] = num(c.cost.activation_return_ms);
        echo["--cache-capacity"] = std::to_string(c.cache_capacity);
        return c;
    }
};

struct ModelArgs
{
    trace::GenConfig cfg;

    void add(CLI::App* sub)
    {
        sub->add_option("--layers", cfg.layers, "MoE layers");
        sub->add_option("--experts", cfg.experts_per_layer, "Experts per layer");
        sub->add_option("--top-k", cfg.top_k, "Experts selected per token per layer");
        sub->add_option("--hot-path-prob", cfg.hot_path_prob, "Probability a token follows the hot path");
        sub->add_option("--zipf-s", cfg.zipf_s, "Zipf exponent of the per-layer expert popularity (0 = uniform)");
        sub->add_option("--seed", cfg.seed, "Seed for the routing model and token streams");
    }
};

// ---- subcommands -----------------------------------------------------------

struct QuantizeArgs
{
    std::string weights, calib, out = "quantized";
    int bits = 8;
    bool symmetric = false;
    std::string weight_granularity = "per_row", act_granularity = "per_tensor", ordering = "none";
    std::size_t grid_steps = quant::kDefaultGridSteps;
    double damping = quant::kDefaultDamping;

    void add(CLI::App* sub)
    {
        sub->add_option("--weights", weights, "Weight matrix W (out x in), binary matrix file")->required();
        sub->add_option("--calib", calib, "Calibration activations X (in x tokens), binary matrix file")->required();
        sub->add_option("--bits", bits, "Code width for weights and activations")->check(CLI::Range(2, 8));
        sub->add_flag("--symmetric", symmetric, "Symmetric (zero-centred) grids");
        sub->add_option("--weight-granularity", weight_granularity, "per_tensor, per_row or per_column");
        sub->add_option("--act-granularity", act_granularity, "per_tensor, per_row or per_column");
        sub->add_option("--grid-steps", grid_steps, "Smoothing exponent candidates in [0, 1]");
        sub->add_option("--ordering", ordering, "Column order: none, max_abs or sum_squares");
        sub->add_option("--damping", damping, "Hessian damping as a fraction of its mean diagonal");
        sub->add_option("--out", out, "Output prefix: writes <out>.json and <out>.codes");
    }

    void operator()(std::ostream& out_stream) const
    {
        quant::LayerOptions opts;
        opts.quant = quant::JointQuantConfig::with_bits(bits);
        opts.quant.weights.symmetric = opts.quant.activations.symmetric = symmetric;
        opts.quant.weights.granularity = quant::parse_granularity(weight_granularity);
        opts.quant.activations.granularity = quant::parse_granularity(act_granularity);
        opts.quant.weights.validate();
        opts.quant.activations.validate();
        opts.grid_steps = grid_steps;
        opts.ordering = quant::parse_ordering(ordering);
        opts.damping = damping;
        if (!(damping >= 0.0))
            throw ConfigError("--damping must be >= 0");

        const numkit::Matrix w = numkit::read_matrix(weights);
        const numkit::Matrix x = numkit::read_matrix(calib);
        const quant::LayerQuantResult r = quant::quantize_layer(w, x, opts);

        write_file(out + ".json", quant::to_json(r).dump(2) + "\n");
        const auto packed = quant::precision_pack(r.weights, quant::DeviceTarget::gpu_int);
        write_file(out + ".codes",
                   std::string(reinterpret_cast<const char*>(packed.bytes.data()), packed.bytes.size()));

        out_stream << "exponent=" << num(r.smoothing.exponent) << " mse=" << num(r.output_mse)
                   << " rtn_mse=" << num(r.rtn_baseline_mse) << " bits=" << bits
                   << " ordering=" << quant::to_string(r.ordering) << '\n'
                   << "wrote " << out << ".json and " << out << ".codes (" << packed.byte_size() << " bytes)\n";
    }
};

struct GenTraceArgs
{
    ModelArgs model;
    std::string out;

    void add(CLI::App* sub)
    {
        model.add(sub);
        sub->add_option("--prefill", model.cfg.n_prefill_tokens, "Prompt tokens per sequence");
        sub->add_option("--decode", model.cfg.n_decode_tokens, "Generated tokens per sequence");
        sub->add_option("--sequences", model.cfg.n_sequences, "Number of sequences");
        sub->add_option("--stream", model.cfg.stream, "Token stream id (same routing model, fresh tokens)");
        sub->add_option("--out", out, "Trace file to write")->required();
    }

    void operator()(std::ostream& o) const
    {
        const trace::Trace t = trace::generate_trace(model.cfg);
        trace::write_trace(out, t);
        o << "wrote " << t.events.size() << " events to " << out << '\n';
    }
};

std::string path_string(const std::vector<trace::ExpertId>& path, std::size_t top_k)
{
    std::string s;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i > 0)
            s += (i % top_k == 0) ? '|' : ',';
        s += std::to_string(path[i]);
    }
    return s;
}

struct StatsArgs
{
    std::string trace_path, format = "text", out;
    std::size_t top = 10;

    void add(CLI::App* sub)
    {
        sub->add_option("--trace", trace_path, "Trace file")->required();
        sub->add_option("--top", top, "Number of most frequent paths to list");
        sub->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
        sub->add_option("--out", out, "Write here instead of stdout");
    }

    void operator()(std::ostream& o) const
    {
        const trace::Trace t = trace::read_trace(trace_path);
        if (t.events.empty())
            throw InputError("trace '" + trace_path + "' has no events");
        const trace::PathStats ps = trace::path_stats(t);
        const trace::ExpertFreq ef = trace::expert_freq(t);
        const std::size_t shown = std::min(top, ps.paths.size());
        const double n = static_cast<double>(t.events.size());

        if (format == "json") {
            nlohmann::json doc;
            doc["events"] = t.events.size();
            doc["distinct_paths"] = ps.paths.size();
            auto paths = nlohmann::json::array();
            for (std::size_t i = 0; i < shown; ++i)
                paths.push_back({{"path", path_string(ps.paths[i].path, t.top_k)}, {"count", ps.paths[i].count}});
            doc["paths"] = paths;
            auto freq = nlohmann::json::array();
            for (std::size_t l = 0; l < ef.layers; ++l) {
                auto row = nlohmann::json::array();
                for (std::size_t e = 0; e < ef.experts_per_layer; ++e)
                    row.push_back(ef(l, e));
                freq.push_back(row);
            }
            doc["expert_freq"] = freq;
            emit(o, out, doc.dump(2) + "\n");
            return;
        }
        std::ostringstream s;
        s << ps.paths.size() << " distinct paths over " << t.events.size() << " events\n";
        s << "rank count share path\n";
        char buf[64];
        for (std::size_t i = 0; i < shown; ++i) {
            std::snprintf(buf, sizeof buf, "%zu %llu %.6f ", i + 1, static_cast<unsigned long long>(ps.paths[i].count),
                          static_cast<double>(ps.paths[i].count) / n);
            s << buf << path_string(ps.paths[i].path, t.top_k) << '\n';
        }
        s << "expert activations per layer\n";
        for (std::size_t l = 0; l < ef.layers; ++l) {
            s << l << ':';
            for (std::size_t e = 0; e < ef.experts_per_layer; ++e)
                s << ' ' << ef(l, e);
            s << '\n';
        }
        emit(o, out, s.str());
    }
};

struct PlanArgs
{
    std::string trace_path, strategy = "two-stage", out;
    std::size_t budget = 128, top_k_per_layer = 2, supplement = 2;

    void add(CLI::App* sub)
    {
        sub->add_option("--trace", trace_path, "Calibration trace")->required();
        sub->add_option("--strategy", strategy, "frequency, path or two-stage");
        sub->add_option("--budget", budget, "Resident experts (frequency and path; two-stage uses its per-layer counts)");
        sub->add_option("--top-k-per-layer", top_k_per_layer, "Two-stage: residents per layer taken from hot paths");
        sub->add_option("--supplement", supplement, "Two-stage: extra residents per layer by frequency");
        sub->add_option("--out", out, "Plan file (JSON)")->required();
    }

    void operator()(std::ostream& o) const
    {
        const trace::Trace t = trace::read_trace(trace_path);
        if (t.events.empty())
            throw InputError("trace '" + trace_path + "' has no events");
        placement::PlacementPlan plan;
        switch (placement::parse_strategy(strategy)) {
        case placement::Strategy::frequency:
            plan = placement::plan_frequency(trace::expert_freq(t), budget);
            break;
        case placement::Strategy::path:
            plan = placement::plan_path(trace::path_stats(t), budget);
            break;
        case placement::Strategy::two_stage:
            plan = placement::plan_two_stage(trace::path_stats(t), trace::expert_freq(t), top_k_per_layer, supplement);
            break;
        }
        placement::write_plan(out, plan);
        const placement::PlanReport r = placement::evaluate_plan(plan, t);
        std::size_t lo = plan.experts_per_layer, hi = 0;
        for (const auto& layer : plan.residents) {
            lo = std::min(lo, layer.size());
            hi = std::max(hi, layer.size());
        }
        o << "strategy=" << placement::to_string(plan.strategy) << " residents=" << plan.total()
          << " per_layer=" << lo << ".." << hi << " mean=" << num(r.mean) << " std=" << num(r.std)
          << " gap=" << num(r.gap) << '\n'
          << "wrote " << out << '\n';
    }
};

struct SimulateArgs
{
    std::string trace_path, plan_path, format = "text", out;
    CostArgs cost;

    void add(CLI::App* sub)
    {
        sub->add_option("--trace", trace_path, "Trace to replay")->required();
        sub->add_option("--plan", plan_path, "Placement plan (JSON)")->required();
        cost.add(sub);
        sub->add_option("--format", format, "text, csv, plotdata or json")
            ->check(CLI::IsMember({"text", "csv", "plotdata", "json"}));
        sub->add_option("--out", out, "Write here instead of stdout");
    }

    void operator()(std::ostream& o, const sim::SimConfig& sc) const
    {
        const trace::Trace t = trace::read_trace(trace_path);
        const placement::PlacementPlan plan = placement::read_plan(plan_path);
        const sim::SimReport r = sim::simulate(t, plan, sc.cost, sc.cache_capacity);
        if (format == "json")
            emit(o, out, sim::to_json(r).dump(2) + "\n");
        else
            emit(o, out, sim::render_report(r, sim::parse_report_format(format)));
    }
};

struct SweepArgs
{
    ModelArgs model;
    CostArgs cost;
    SweepConfig cfg;
    std::vector<std::string> strategies{"frequency", "path", "two-stage"};
    std::string out;

    void add(CLI::App* sub)
    {
        model.add(sub);
        sub->add_option("--jobs", cfg.jobs, "Cells evaluated in parallel")->check(CLI::PositiveNumber);
        sub->add_option("--strategies", strategies, "Strategies to compare")->delimiter(',');
        sub->add_option("--budgets", cfg.budgets, "Resident expert budgets")->delimiter(',');
        sub->add_option("--lengths", cfg.lengths, "Input (prompt) lengths in tokens")->delimiter(',');
        sub->add_option("--top-k-per-layer", cfg.top_k_per_layer, "Two-stage: hot-path residents per layer");
        sub->add_option("--calib-tokens", cfg.calib_tokens, "Tokens in the calibration trace");
        sub->add_option("--eval-tokens", cfg.eval_tokens, "Prompt tokens per cell, split into sequences");
        sub->add_option("--decode-tokens", cfg.decode_tokens, "Generated tokens per evaluation sequence");
        cost.add(sub);
        sub->add_option("--out", out, "Write the CSV here instead of stdout");
    }

    void operator()(std::ostream& o, const sim::SimConfig& sc)
    {
        cfg.model = model.cfg;
        cfg.sim = sc;
        cfg.strategies.clear();
        for (const auto& s : strategies)
            cfg.strategies.push_back(placement::parse_strategy(s));
        emit(o, out, sweep_csv(run_sweep(cfg)));
    }
};

struct ReportArgs
{
    std::vector<std::string> inputs;
    std::string format = "text", out;

    void add(CLI::App* sub)
    {
        sub->add_option("--input", inputs, "Simulation report(s) written by 'simulate --format json'")
            ->required()
            ->delimiter(',');
        sub->add_option("--format", format, "text, csv or plotdata")
            ->check(CLI::IsMember({"text", "csv", "plotdata"}));
        sub->add_option("--out", out, "Write here instead of stdout");
    }

    void operator()(std::ostream& o) const
    {
        const auto fmt = sim::parse_report_format(format);
        if (fmt == sim::ReportFormat::csv && inputs.size() != 1)
            throw ConfigError("csv output takes exactly one --input");
        std::string text;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            std::ifstream in(inputs[i]);
            if (!in)
                throw IoError("cannot open report '" + inputs[i] + "'");
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError("report '" + inputs[i] + "': " + e.what());
            }
            if (i > 0)
                text += fmt == sim::ReportFormat::plotdata ? "\n\n" : "\n";
            text += sim::render_report(sim::report_from_json(doc), fmt);
        }
        emit(o, out, text);
    }
};

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"moek: hessian-aware quantization and CPU/GPU expert placement for MoE inference", "moek"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1, 1);

    QuantizeArgs quantize;
    GenTraceArgs gen;
    StatsArgs stats;
    PlanArgs plan;
    SimulateArgs simulate;
    SweepArgs sweep;
    ReportArgs report;

    std::map<CLI::App*, std::function<void(Resolved&)>> commands;
    auto add = [&](const char* name, const char* help, auto& args_struct, auto handler) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", "JSON object of option values (keys use underscores); flags win");
        args_struct.add(sub);
        commands[sub] = handler;
    };

    std::string echo;
    CLI::App* chosen = nullptr;
    // handlers print the echo line once all derived values are known
    auto start = [&](Resolved& r) { out << echo_line(chosen, r); };

    add("quantize", "Smooth and Hessian-quantize one layer", quantize, [&](Resolved& r) {
        start(r);
        quantize(out);
    });
    add("gen-trace", "Generate a synthetic routing trace", gen, [&](Resolved& r) {
        start(r);
        gen(out);
    });
    add("stats", "Path and expert frequency tables of a trace", stats, [&](Resolved& r) {
        start(r);
        stats(out);
    });
    add("plan", "Build a GPU placement plan from a trace", plan, [&](Resolved& r) {
        start(r);
        plan(out);
    });
    add("simulate", "Replay a trace against a plan and cost model", simulate, [&](Resolved& r) {
        const auto sc = simulate.cost.resolve(r);
        start(r);
        if (!sc.cost.cpu_not_faster())
            err << "warning: latency_cpu_ms < latency_gpu_ms; the offload model assumes the CPU is slower\n";
        simulate(out, sc);
    });
    add("sweep", "Strategy x budget x input-length grid as CSV", sweep, [&](Resolved& r) {
        const auto sc = sweep.cost.resolve(r);
        start(r);
        sweep(out, sc);
    });
    add("report", "Render saved simulation reports", report, [&](Resolved& r) {
        start(r);
        report(out);
    });

    try {
        std::vector<std::string> argv = args;
        apply_config(app, argv);
        std::reverse(argv.begin(), argv.end());
        app.parse(argv);
        chosen = app.get_subcommands().front();
        Resolved resolved;
        commands.at(chosen)(resolved);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

} // namespace moek::cli
