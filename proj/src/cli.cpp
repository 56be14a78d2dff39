#include "aiive/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <pthread.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "aiive/dataset.hpp"
#include "aiive/error.hpp"
#include "aiive/protocol.hpp"
#include "aiive/server.hpp"
#include "aiive/session.hpp"
#include "aiive/sonifier.hpp"

namespace aiive::cli {
namespace {

constexpr std::uint32_t kWavRate = 44100;
constexpr double kSecondsPerEpoch = 1.0;

struct GenOptions {
    std::string out;
    std::uint64_t seed = 1;
    std::vector<std::size_t> counts{kDefaultSplitCounts.begin(), kDefaultSplitCounts.end()};
};

struct TrainOptions {
    std::string data;
    std::size_t h1 = 32;
    std::size_t h2 = 16;
    double lr = 0.1;
    double momentum = 0.9;
    std::size_t batch = 64;
    std::size_t epochs = 50;
    std::uint64_t seed = 1;
    bool paper_literal = false;
    std::string serve;
    std::string script;
    std::string trace;
    std::string wav;
    std::string sonify = "accuracy";
    std::string static_dir;
};

struct ReplayOptions {
    std::vector<std::string> traces;
    double tolerance = 1e-12;
};

SonificationMode sonify_mode(const std::string& s)
{
    if (s == "accuracy")
        return SonificationMode::AccuracyBoth;
    if (s == "loss")
        return SonificationMode::LossBoth;
    return SonificationMode::Split;
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& addr)
{
    std::string host = "127.0.0.1";
    std::string port = addr;
    if (const auto colon = addr.rfind(':'); colon != std::string::npos) {
        if (colon > 0)
            host = addr.substr(0, colon);
        port = addr.substr(colon + 1);
    }
    try {
        std::size_t used = 0;
        const unsigned long p = std::stoul(port, &used);
        if (used == port.size() && p <= 65535)
            return {host, static_cast<std::uint16_t>(p)};
    } catch (const std::exception&) {
    }
    throw CLI::ValidationError("--serve", "expected HOST:PORT, got '" + addr + "'");
}

int gen_data(const GenOptions& o, std::ostream& out)
{
    if (o.counts.size() != 3)
        throw CLI::ValidationError("--counts", "expected three comma-separated counts");
    SyntheticConfig cfg;
    cfg.counts = {o.counts[0], o.counts[1], o.counts[2]};
    cfg.seed = o.seed;
    const Dataset ds = generate_synthetic(cfg);
    save_dataset(ds, o.out);
    out << "wrote " << ds.size() << " images (" << cfg.counts[0] << '/' << cfg.counts[1] << '/'
        << cfg.counts[2] << ") to " << o.out << ".meta/.bin\n";
    return kExitOk;
}

// Blocks SIGINT/SIGTERM for the process and turns them into a Shutdown.
class SignalWatcher {
public:
    explicit SignalWatcher(Session& session)
    {
        sigemptyset(&set_);
        sigaddset(&set_, SIGINT);
        sigaddset(&set_, SIGTERM);
        sigaddset(&set_, SIGUSR1);
        pthread_sigmask(SIG_BLOCK, &set_, &old_);
        thread_ = std::thread([this, &session] {
            int sig = 0;
            sigwait(&set_, &sig);
            if (sig != SIGUSR1)
                spdlog::info("signal {}, shutting down", sig);
            session.post(cmd::Shutdown{});
        });
    }
    ~SignalWatcher()
    {
        pthread_kill(thread_.native_handle(), SIGUSR1);
        thread_.join();
        pthread_sigmask(SIG_SETMASK, &old_, nullptr);
    }

private:
    sigset_t set_{};
    sigset_t old_{};
    std::thread thread_;
};

int train(const TrainOptions& o, std::ostream& out)
{
    std::shared_ptr<const Dataset> ds;
    try {
        ds = std::make_shared<const Dataset>(load_dataset(o.data));
    } catch (const std::exception& e) {
        throw IoError("cannot open dataset '" + o.data + "': " + e.what());
    }

    SessionConfig cfg;
    cfg.dataset = ds;
    cfg.hidden1 = o.h1;
    cfg.hidden2 = o.h2;
    cfg.hyperparams = {o.lr, o.momentum, o.batch};
    cfg.seed = o.seed;
    cfg.momentum_mode = o.paper_literal ? MomentumMode::PaperLiteral : MomentumMode::Standard;
    cfg.sonification = sonify_mode(o.sonify);
    cfg.epochs = o.epochs;

    std::vector<ScriptEntry> script;
    if (!o.script.empty()) {
        std::ifstream in(o.script);
        if (!in)
            throw IoError("cannot open script '" + o.script + "'");
        script = protocol::parse_script(in);
    }

    Session session(cfg);

    std::vector<TraceRow> rows;
    std::vector<ToneSegment> tones;
    bool want_tone = false;
    session.subscribe([&](const Event& e) {
        if (const auto* ep = std::get_if<ev::EpochCompleted>(&e)) {
            const TraceRow row{ep->metrics.epoch, ep->metrics.val_accuracy, ep->metrics.val_loss,
                               ep->hyperparams.learning_rate, ep->hyperparams.momentum};
            rows.push_back(row);
            out << "epoch " << row.epoch << "  val_accuracy " << row.val_accuracy << "  val_loss "
                << row.val_loss << std::endl;
            want_tone = true;
        } else if (const auto* a = std::get_if<ev::Audio>(&e); a && want_tone) {
            // The tone sounded at the end of an epoch fills that epoch's second.
            ToneSegment seg;
            seg.start = static_cast<double>(rows.size() - 1) * kSecondsPerEpoch;
            seg.left.push_back(a->left_freq);
            seg.right.push_back(a->right_freq);
            if (a->left_extra)
                seg.left.push_back(*a->left_extra);
            if (a->right_extra)
                seg.right.push_back(*a->right_extra);
            tones.push_back(std::move(seg));
            want_tone = false;
        }
    });

    if (!o.serve.empty()) {
        const auto [host, port] = parse_address(o.serve);
        ServerConfig scfg;
        scfg.host = host;
        scfg.port = port;
        if (!o.static_dir.empty())
            scfg.static_dir = o.static_dir;
        // Before any server thread exists, so they all inherit the mask.
        SignalWatcher watcher(session);
        Server server(session, scfg);
        server.start();
        out << "serving on " << host << ':' << server.port() << std::endl;
        session.run_live();
        server.stop();
    } else {
        session.run_script(script);
    }

    if (!o.trace.empty()) {
        std::ofstream f(o.trace, std::ios::binary);
        if (!f)
            throw IoError("cannot write trace '" + o.trace + "'");
        f << kTraceHeader << '\n';
        for (const auto& r : rows)
            f << format_trace_row(r) << '\n';
        if (!f)
            throw IoError("failed writing trace '" + o.trace + "'");
    }
    if (!o.wav.empty()) {
        const double duration = static_cast<double>(rows.size()) * kSecondsPerEpoch;
        write_wav(o.wav, render(tones, kWavRate, duration));
    }
    return kExitOk;
}

bool close_enough(double a, double b, double tol)
{
    if (a == b)
        return true; // includes matching infinities
    return std::abs(a - b) <= tol;
}

int replay(const ReplayOptions& o, std::ostream& out)
{
    const auto a = read_trace(o.traces[0]);
    const auto b = read_trace(o.traces[1]);
    if (a.size() != b.size()) {
        out << "traces differ: " << a.size() << " vs " << b.size() << " rows\n";
        return kExitRuntime;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a[i];
        const auto& y = b[i];
        const bool same = x.epoch == y.epoch && close_enough(x.val_accuracy, y.val_accuracy, o.tolerance) &&
                          close_enough(x.val_loss, y.val_loss, o.tolerance) &&
                          close_enough(x.learning_rate, y.learning_rate, o.tolerance) &&
                          close_enough(x.momentum, y.momentum, o.tolerance);
        if (!same) {
            out << "traces differ at row " << i + 1 << ":\n  " << format_trace_row(x) << "\n  "
                << format_trace_row(y) << '\n';
            return kExitRuntime;
        }
    }
    out << "traces match (" << a.size() << " rows)\n";
    return kExitOk;
}

} // namespace

void configure_logging()
{
    auto logger = spdlog::stderr_color_mt("aiive");
    spdlog::set_default_logger(logger);
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("AIIVE_LOG")) {
        const auto parsed = spdlog::level::from_str(env);
        // from_str maps unknown names to "off"
        if (parsed != spdlog::level::off || std::string_view(env) == "off")
            level = parsed;
    }
    spdlog::set_level(level);
}

std::string format_trace_row(const TraceRow& row)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", row.epoch, row.val_accuracy, row.val_loss,
                  row.learning_rate, row.momentum);
    return buf;
}

std::vector<TraceRow> read_trace(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open trace '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader)
        throw InvalidArgument(path + ": missing trace header");
    std::vector<TraceRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        TraceRow r;
        char tail = 0;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf%c", &r.epoch, &r.val_accuracy, &r.val_loss,
                        &r.learning_rate, &r.momentum, &tail) != 5)
            throw InvalidArgument(path + ": malformed row at line " + std::to_string(lineno));
        rows.push_back(r);
    }
    return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Steerable MLP training with force-graph layout and sonification"};
    app.name("aiive");
    app.require_subcommand(1);

    GenOptions gen;
    auto* g = app.add_subcommand("gen-data", "Write a synthetic dataset");
    g->add_option("--out", gen.out, "Output prefix (writes PREFIX.meta and PREFIX.bin)")->required();
    g->add_option("--seed", gen.seed, "Generator seed");
    g->add_option("--counts", gen.counts, "Train,validation,test counts")->delimiter(',')->expected(3);

    TrainOptions tr;
    auto* t = app.add_subcommand("train", "Train a network, optionally serving clients");
    t->add_option("--data", tr.data, "Dataset prefix")->required();
    t->add_option("--h1", tr.h1, "First hidden layer width")->check(CLI::PositiveNumber);
    t->add_option("--h2", tr.h2, "Second hidden layer width")->check(CLI::PositiveNumber);
    t->add_option("--lr", tr.lr, "Learning rate")->check(CLI::PositiveNumber);
    t->add_option("--momentum", tr.momentum, "Momentum in [0, 1)");
    t->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
    t->add_option("--epochs", tr.epochs, "Epoch budget (0 = unlimited, only with --serve)");
    t->add_option("--seed", tr.seed, "Seed for init and shuffling");
    t->add_flag("--paper-literal-momentum", tr.paper_literal, "Use the previous raw gradient as the momentum term");
    t->add_option("--serve", tr.serve, "Listen on HOST:PORT for clients");
    t->add_option("--static-dir", tr.static_dir, "Serve this directory over HTTP (with --serve)");
    t->add_option("--script", tr.script, "JSONL command script ({\"at_step\", \"cmd\"} per line)");
    t->add_option("--trace", tr.trace, "Write per-epoch metrics CSV");
    t->add_option("--wav", tr.wav, "Write a stereo WAV, one second per epoch");
    t->add_option("--sonify", tr.sonify, "Channel routing")->check(CLI::IsMember({"accuracy", "loss", "split"}));

    ReplayOptions rp;
    auto* r = app.add_subcommand("replay", "Compare two metric traces");
    r->add_option("--trace", rp.traces, "Trace CSV (give twice)")->required()->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    r->add_option("--tolerance", rp.tolerance, "Absolute tolerance")->check(CLI::NonNegativeNumber);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (r->parsed() && rp.traces.size() != 2)
            throw CLI::ValidationError("--trace", "replay needs exactly two traces");
        if (t->parsed()) {
            if (!tr.serve.empty() && !tr.script.empty())
                throw CLI::ValidationError("--script", "scripts run headless; drop --serve");
            if (tr.serve.empty() && tr.epochs == 0)
                throw CLI::ValidationError("--epochs", "headless training needs a positive budget");
            if (!tr.static_dir.empty() && tr.serve.empty())
                throw CLI::ValidationError("--static-dir", "requires --serve");
            if (!tr.serve.empty())
                (void)parse_address(tr.serve);
        }
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (g->parsed())
            return gen_data(gen, out);
        if (t->parsed())
            return train(tr, out);
        return replay(rp, out);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace aiive::cli
