#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aiive/dataset.hpp"
#include "aiive/layout.hpp"
#include "aiive/mlp.hpp"
#include "aiive/optimizer.hpp"
#include "aiive/sonifier.hpp"
#include "aiive/trainer.hpp"

namespace aiive {

enum class SessionState { Running, Paused, EditingStructure, EditingWeights, TuningHyperparams };

std::string_view to_string(SessionState state);
SessionState parse_session_state(std::string_view name);

namespace cmd {
struct Pause {
    friend bool operator==(const Pause&, const Pause&) = default;
};
struct Resume {
    friend bool operator==(const Resume&, const Resume&) = default;
};
struct SetHyperparams {
    double learning_rate = 0.0;
    double momentum = 0.0;
    friend bool operator==(const SetHyperparams&, const SetHyperparams&) = default;
};
struct AddNeuron {
    int layer = 1;
    Vec3 position;
    friend bool operator==(const AddNeuron&, const AddNeuron&) = default;
};
struct RemoveNeuron {
    int layer = 1;
    int node_id = 0;
    Vec3 position;
    friend bool operator==(const RemoveNeuron&, const RemoveNeuron&) = default;
};
struct DragNode {
    int node_id = 0;
    Vec3 position;
    friend bool operator==(const DragNode&, const DragNode&) = default;
};
struct ReleaseNode {
    int node_id = 0;
    friend bool operator==(const ReleaseNode&, const ReleaseNode&) = default;
};
struct SetSonification {
    SonificationMode mode = SonificationMode::AccuracyBoth;
    friend bool operator==(const SetSonification&, const SetSonification&) = default;
};
struct EvaluateNow {
    friend bool operator==(const EvaluateNow&, const EvaluateNow&) = default;
};
struct Shutdown {
    friend bool operator==(const Shutdown&, const Shutdown&) = default;
};
} // namespace cmd

using Command = std::variant<cmd::Pause, cmd::Resume, cmd::SetHyperparams, cmd::AddNeuron,
                             cmd::RemoveNeuron, cmd::DragNode, cmd::ReleaseNode,
                             cmd::SetSonification, cmd::EvaluateNow, cmd::Shutdown>;

namespace ev {
struct StateChanged {
    SessionState state = SessionState::Paused;
    friend bool operator==(const StateChanged&, const StateChanged&) = default;
};
struct EpochCompleted {
    EpochMetrics metrics;
    Hyperparams hyperparams; // in effect during the epoch
    ParamSet weights;
    friend bool operator==(const EpochCompleted&, const EpochCompleted&) = default;
};
struct LayoutFrame {
    LayoutSnapshot snapshot;
    friend bool operator==(const LayoutFrame&, const LayoutFrame&) = default;
};
struct HyperparamsChanged {
    Hyperparams hyperparams;
    bool committed = false; // false while staged in TuningHyperparams
    friend bool operator==(const HyperparamsChanged&, const HyperparamsChanged&) = default;
};
struct StructureChanged {
    LayerSizes layer_sizes{};
    friend bool operator==(const StructureChanged&, const StructureChanged&) = default;
};
struct EvalResult {
    EvalMetrics metrics;
    friend bool operator==(const EvalResult&, const EvalResult&) = default;
};
// Target oscillator frequencies. The extra tones carry a hyperparameter being
// tuned: learning rate on the right, momentum on the left.
struct Audio {
    double left_freq = 0.0;
    double right_freq = 0.0;
    std::optional<double> left_extra;
    std::optional<double> right_extra;
    friend bool operator==(const Audio&, const Audio&) = default;
};
struct Error {
    std::string code;
    std::string text;
    friend bool operator==(const Error&, const Error&) = default;
};
} // namespace ev

using Event = std::variant<ev::StateChanged, ev::EpochCompleted, ev::LayoutFrame,
                           ev::HyperparamsChanged, ev::StructureChanged, ev::EvalResult, ev::Audio,
                           ev::Error>;

namespace error_code {
inline constexpr std::string_view kIllegalTransition = "illegal_transition";
inline constexpr std::string_view kInvalidArgument = "invalid_argument";
inline constexpr std::string_view kNumeric = "numeric";
inline constexpr std::string_view kFinished = "finished";
inline constexpr std::string_view kProtocol = "protocol";
} // namespace error_code

struct ScriptEntry {
    std::size_t at_step = 0;
    Command cmd;
    friend bool operator==(const ScriptEntry&, const ScriptEntry&) = default;
};

struct SessionConfig {
    std::shared_ptr<const Dataset> dataset;
    std::size_t hidden1 = 32;
    std::size_t hidden2 = 16;
    Hyperparams hyperparams;
    std::uint64_t seed = 1;
    MomentumMode momentum_mode = MomentumMode::Standard;
    LayoutParams layout;
    SonificationMode sonification = SonificationMode::AccuracyBoth;
    std::size_t epochs = 0;              // training budget; 0 = unlimited
    std::size_t layout_frame_every = 3;  // ticks per LayoutFrame (60 Hz -> 20 Hz)
    double spawn_radius = 1.0;           // layer-center distance for add/remove
};

// Thread-safe summary for late joiners (e.g. the server hello).
struct SessionInfo {
    LayerSizes layer_sizes{};
    Hyperparams hyperparams;
    SessionState state = SessionState::Paused;
    SonificationConfig sonification;
    std::size_t epochs_completed = 0;
    std::size_t global_step = 0;
};

// Owns the trainer and the layout graph. All mutation happens on the thread
// that calls handle()/advance()/tick_layout() or one of the run loops;
// post() and info() may be called from anywhere. Subscribers are called
// synchronously on the session thread.
class Session {
public:
    using Subscriber = std::function<void(const Event&)>;

    explicit Session(SessionConfig config);

    std::size_t subscribe(Subscriber fn);
    void unsubscribe(std::size_t id);

    // Applies one command immediately.
    void handle(const Command& command);

    // One training step when Running (plus the epoch boundary work). Returns
    // whether a step ran.
    bool advance();

    // Syncs edge weights, integrates once, and emits a LayoutFrame every
    // layout_frame_every ticks.
    void tick_layout();

    void emit_audio();

    // Headless driver: runs until the epoch budget is reached, the script is
    // exhausted while not Running, or Shutdown. One layout tick per step.
    void run_script(const std::vector<ScriptEntry>& script);

    struct LiveClock {
        double layout_hz = 60.0;
        double audio_hz = 10.0;
    };
    // Realtime driver: drains posted commands, ticks the layout on the wall
    // clock (also while paused) and trains between ticks. Returns on Shutdown.
    void run_live(LiveClock clock);
    void run_live() { run_live(LiveClock{}); }

    void post(Command command);

    SessionInfo info() const;

    SessionState state() const { return state_; }
    const Trainer& trainer() const { return trainer_; }
    const LayoutGraph& layout() const { return layout_; }
    const Hyperparams& staged_hyperparams() const { return staged_; }
    SonificationMode sonification_mode() const { return sonification_.mode; }
    const std::optional<EvalMetrics>& last_metrics() const { return last_metrics_; }
    bool finished() const;
    bool shutdown_requested() const { return shutdown_; }

private:
    struct DragRef {
        int node_id = -1;
        Vec3 start;
        // Peer id, distance at drag start, and the original weights it governs.
        struct Incident {
            int peer = -1;
            double start_distance = 0.0;
            std::size_t edge_index = 0;
            std::vector<double> weights;
        };
        std::vector<Incident> incident;
        ParamSet original;
    };

    void emit(const Event& event);
    void set_state(SessionState next);
    void error(std::string_view code, std::string text);
    void publish_info();
    std::pair<double, double> routed_freqs() const;

    void on(const cmd::Pause&);
    void on(const cmd::Resume&);
    void on(const cmd::SetHyperparams&);
    void on(const cmd::AddNeuron&);
    void on(const cmd::RemoveNeuron&);
    void on(const cmd::DragNode&);
    void on(const cmd::ReleaseNode&);
    void on(const cmd::SetSonification&);
    void on(const cmd::EvaluateNow&);
    void on(const cmd::Shutdown&);

    bool require_paused(std::string_view what);
    void apply_drag(const Vec3& position);
    void evaluate_and_report(bool emit_result);
    void drain_posted();

    SessionConfig config_;
    std::shared_ptr<const Dataset> dataset_;
    Trainer trainer_;
    LayoutGraph layout_;
    SessionState state_ = SessionState::Running;
    Hyperparams staged_;
    SonificationConfig sonification_;
    std::optional<EvalMetrics> last_metrics_;
    std::optional<DragRef> drag_;
    std::size_t edit_counter_ = 0;
    std::size_t layout_ticks_ = 0;
    bool shutdown_ = false;

    mutable std::mutex info_mutex_;
    SessionInfo info_;

    std::mutex subscriber_mutex_;
    std::vector<std::pair<std::size_t, Subscriber>> subscribers_;
    std::size_t next_subscriber_ = 0;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<Command> queue_;
};

} // namespace aiive
