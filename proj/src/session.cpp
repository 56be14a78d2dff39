#include "aiive/session.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "aiive/error.hpp"
#include "aiive/rng.hpp"

namespace aiive {

namespace {

constexpr std::uint64_t kLayoutStream = 0x4c61796f7574ULL;
constexpr std::uint64_t kGrowthStream = 0x47726f77ULL;

LayerSizes initial_sizes(const SessionConfig& c)
{
    if (!c.dataset)
        throw InvalidArgument("session needs a dataset");
    return {c.dataset->input_dim(), c.hidden1, c.hidden2, c.dataset->num_classes()};
}

Trainer make_trainer(const SessionConfig& c)
{
    const LayerSizes sizes = initial_sizes(c);
    validate_sizes(sizes);
    c.hyperparams.validate(c.dataset->split_size(Split::Train));
    c.layout.validate();
    if (c.layout_frame_every == 0)
        throw InvalidArgument("layout_frame_every must be positive");
    if (!(c.spawn_radius > 0.0))
        throw InvalidArgument("spawn_radius must be positive");
    return Trainer(*c.dataset, init_network(sizes, c.seed), c.hyperparams, c.seed, c.momentum_mode);
}

} // namespace

std::string_view to_string(SessionState state)
{
    switch (state) {
    case SessionState::Running: return "running";
    case SessionState::Paused: return "paused";
    case SessionState::EditingStructure: return "editing_structure";
    case SessionState::EditingWeights: return "editing_weights";
    case SessionState::TuningHyperparams: return "tuning_hyperparams";
    }
    return "?";
}

SessionState parse_session_state(std::string_view name)
{
    for (auto s : {SessionState::Running, SessionState::Paused, SessionState::EditingStructure,
                   SessionState::EditingWeights, SessionState::TuningHyperparams})
        if (to_string(s) == name)
            return s;
    throw InvalidArgument("unknown session state '" + std::string(name) + "'");
}

Session::Session(SessionConfig config)
    : config_(std::move(config)),
      dataset_(config_.dataset),
      trainer_(make_trainer(config_)),
      layout_(LayoutGraph::build(trainer_.net(), Rng::derive(config_.seed, kLayoutStream))),
      staged_(config_.hyperparams),
      sonification_(SonificationConfig::defaults(dataset_->num_classes()))
{
    sonification_.mode = config_.sonification;
    layout_.sync_weights(trainer_.net());
    publish_info();
}

std::size_t Session::subscribe(Subscriber fn)
{
    std::lock_guard lock(subscriber_mutex_);
    subscribers_.emplace_back(next_subscriber_, std::move(fn));
    return next_subscriber_++;
}

void Session::unsubscribe(std::size_t id)
{
    std::lock_guard lock(subscriber_mutex_);
    std::erase_if(subscribers_, [id](const auto& s) { return s.first == id; });
}

void Session::emit(const Event& event)
{
    std::vector<Subscriber> targets;
    {
        std::lock_guard lock(subscriber_mutex_);
        for (const auto& s : subscribers_)
            targets.push_back(s.second);
    }
    for (const auto& fn : targets)
        fn(event);
}

void Session::publish_info()
{
    std::lock_guard lock(info_mutex_);
    info_.layer_sizes = trainer_.net().sizes();
    info_.hyperparams = state_ == SessionState::TuningHyperparams ? staged_ : trainer_.hyperparams();
    info_.state = state_;
    info_.sonification = sonification_;
    info_.epochs_completed = trainer_.epochs_completed();
    info_.global_step = trainer_.global_step();
}

SessionInfo Session::info() const
{
    std::lock_guard lock(info_mutex_);
    return info_;
}

void Session::set_state(SessionState next)
{
    if (next == state_)
        return;
    state_ = next;
    publish_info();
    emit(ev::StateChanged{next});
}

void Session::error(std::string_view code, std::string text)
{
    emit(ev::Error{std::string(code), std::move(text)});
}

bool Session::finished() const
{
    return config_.epochs != 0 && trainer_.epochs_completed() >= config_.epochs;
}

std::pair<double, double> Session::routed_freqs() const
{
    const EvalMetrics m = last_metrics_.value_or(EvalMetrics{});
    return route(sonification_.mode, map_to_freq(sonification_.accuracy, m.accuracy),
                 map_to_freq(sonification_.loss, m.loss));
}

void Session::emit_audio()
{
    if (!last_metrics_)
        return;
    const auto [left, right] = routed_freqs();
    ev::Audio a{left, right, std::nullopt, std::nullopt};
    if (state_ == SessionState::TuningHyperparams) {
        const Hyperparams& live = trainer_.hyperparams();
        if (staged_.learning_rate != live.learning_rate)
            a.right_extra = map_to_freq(sonification_.learning_rate, staged_.learning_rate);
        if (staged_.momentum != live.momentum)
            a.left_extra = map_to_freq(sonification_.momentum, staged_.momentum);
    }
    emit(a);
}

void Session::handle(const Command& command)
{
    std::visit([this](const auto& c) { on(c); }, command);
}

bool Session::require_paused(std::string_view what)
{
    if (state_ != SessionState::Running)
        return true;
    error(error_code::kIllegalTransition, std::string(what) + " requires training to be paused");
    return false;
}

void Session::on(const cmd::Pause&)
{
    if (state_ != SessionState::Running) {
        error(error_code::kIllegalTransition, "pause: training is not running");
        return;
    }
    set_state(SessionState::Paused);
}

void Session::on(const cmd::Resume&)
{
    if (state_ == SessionState::Running) {
        error(error_code::kIllegalTransition, "resume: training is already running");
        return;
    }
    if (finished()) {
        error(error_code::kFinished, "resume: the epoch budget is used up");
        return;
    }
    if (drag_) {
        layout_.unpin(drag_->node_id);
        drag_.reset();
    }
    const bool changed = !(staged_ == trainer_.hyperparams());
    if (changed)
        trainer_.set_rates(staged_.learning_rate, staged_.momentum);
    set_state(SessionState::Running);
    if (changed)
        emit(ev::HyperparamsChanged{trainer_.hyperparams(), true});
}

void Session::on(const cmd::SetHyperparams& c)
{
    Hyperparams next = trainer_.hyperparams();
    next.learning_rate = c.learning_rate;
    next.momentum = c.momentum;
    try {
        next.validate(dataset_->split_size(Split::Train));
    } catch (const InvalidArgument& e) {
        error(error_code::kInvalidArgument, std::string("set_hyperparams: ") + e.what());
        return;
    }
    staged_ = next;
    set_state(SessionState::TuningHyperparams);
    publish_info();
    emit(ev::HyperparamsChanged{staged_, false});
    emit_audio();
}

void Session::on(const cmd::AddNeuron& c)
{
    if (!require_paused("add_neuron"))
        return;
    if (c.layer != 1 && c.layer != 2) {
        error(error_code::kInvalidArgument, "add_neuron: layer must be 1 or 2");
        return;
    }
    if (!c.position.finite()) {
        error(error_code::kInvalidArgument, "add_neuron: non-finite position");
        return;
    }
    const NodeKind kind = c.layer == 1 ? NodeKind::Hidden1 : NodeKind::Hidden2;
    const double d = distance(c.position, layout_.layer_center(kind));
    if (d >= config_.spawn_radius) {
        error(error_code::kInvalidArgument,
              "add_neuron: position is " + std::to_string(d) + " units from the layer center");
        return;
    }
    trainer_.grow_hidden(c.layer, Rng::derive(Rng::derive(config_.seed, kGrowthStream), edit_counter_++));
    layout_.add_hidden_node(c.layer, c.position);
    layout_.sync_weights(trainer_.net());
    set_state(SessionState::EditingStructure);
    publish_info();
    emit(ev::StructureChanged{trainer_.net().sizes()});
}

void Session::on(const cmd::RemoveNeuron& c)
{
    if (!require_paused("remove_neuron"))
        return;
    if (!layout_.contains(c.node_id) || layout_.hidden_layer_of(c.node_id) != c.layer) {
        error(error_code::kInvalidArgument, "remove_neuron: node " + std::to_string(c.node_id) +
                                                " is not in hidden layer " + std::to_string(c.layer));
        return;
    }
    if (!c.position.finite()) {
        error(error_code::kInvalidArgument, "remove_neuron: non-finite position");
        return;
    }
    if (layout_.hidden_nodes(c.layer).size() <= 1) {
        error(error_code::kInvalidArgument, "remove_neuron: cannot remove the last neuron of a layer");
        return;
    }
    const NodeKind kind = c.layer == 1 ? NodeKind::Hidden1 : NodeKind::Hidden2;
    const double d = distance(c.position, layout_.layer_center(kind));
    if (d >= config_.spawn_radius) {
        error(error_code::kInvalidArgument,
              "remove_neuron: position is " + std::to_string(d) + " units from the layer center");
        return;
    }
    if (drag_ && drag_->node_id == c.node_id)
        drag_.reset();
    trainer_.remove_hidden(c.layer, layout_.neuron_index(c.node_id));
    layout_.remove_hidden_node(c.node_id);
    layout_.sync_weights(trainer_.net());
    // Any other drag in progress refers to the old shapes.
    if (drag_) {
        layout_.unpin(drag_->node_id);
        drag_.reset();
    }
    set_state(SessionState::EditingStructure);
    publish_info();
    emit(ev::StructureChanged{trainer_.net().sizes()});
}

void Session::on(const cmd::DragNode& c)
{
    if (!require_paused("drag_node"))
        return;
    if (!layout_.contains(c.node_id)) {
        error(error_code::kInvalidArgument, "drag_node: unknown node " + std::to_string(c.node_id));
        return;
    }
    if (!c.position.finite()) {
        error(error_code::kInvalidArgument, "drag_node: non-finite position");
        return;
    }
    if (drag_ && drag_->node_id != c.node_id) {
        layout_.unpin(drag_->node_id);
        drag_.reset();
    }
    if (!drag_) {
        DragRef ref;
        ref.node_id = c.node_id;
        ref.start = layout_.node(c.node_id).position;
        ref.original = trainer_.net().params;
        for (std::size_t e : layout_.incident_edges(c.node_id)) {
            const LayoutEdge& edge = layout_.edges()[e];
            DragRef::Incident inc;
            inc.peer = edge.a == c.node_id ? edge.b : edge.a;
            inc.start_distance = distance(ref.start, layout_.node(inc.peer).position);
            inc.edge_index = e;
            ref.incident.push_back(inc);
        }
        drag_ = std::move(ref);
    }
    apply_drag(c.position);
    set_state(SessionState::EditingWeights);
    evaluate_and_report(false);
}

void Session::apply_drag(const Vec3& position)
{
    layout_.pin(drag_->node_id, position);
    const double eps = config_.layout.epsilon_dist;
    std::array<Matrix, 3> w{drag_->original.layers[0].weight, drag_->original.layers[1].weight,
                            drag_->original.layers[2].weight};
    std::array<bool, 3> touched{};
    for (const auto& inc : drag_->incident) {
        const LayoutEdge& edge = layout_.edges()[inc.edge_index];
        const double d_new = distance(position, layout_.node(inc.peer).position);
        switch (edge.group) {
        case EdgeGroup::InputHidden1: {
            const int h1 = edge.a == layout_.input_node() ? edge.b : edge.a;
            for (double& v : w[0].row(layout_.neuron_index(h1)))
                v = weight_from_drag(v, inc.start_distance, d_new, eps);
            touched[0] = true;
            break;
        }
        case EdgeGroup::Hidden1Hidden2: {
            const int h1 = layout_.hidden_layer_of(edge.a) == 1 ? edge.a : edge.b;
            const int h2 = h1 == edge.a ? edge.b : edge.a;
            double& v = w[1](layout_.neuron_index(h2), layout_.neuron_index(h1));
            v = weight_from_drag(v, inc.start_distance, d_new, eps);
            touched[1] = true;
            break;
        }
        case EdgeGroup::Hidden2Output: {
            const int h2 = edge.a == layout_.output_node() ? edge.b : edge.a;
            const std::size_t col = layout_.neuron_index(h2);
            for (std::size_t r = 0; r < w[2].rows(); ++r)
                w[2](r, col) = weight_from_drag(w[2](r, col), inc.start_distance, d_new, eps);
            touched[2] = true;
            break;
        }
        }
    }
    for (int l = 0; l < 3; ++l)
        if (touched[l])
            trainer_.set_weights(l + 1, w[l]);
    layout_.sync_weights(trainer_.net());
}

void Session::on(const cmd::ReleaseNode& c)
{
    if (!require_paused("release_node"))
        return;
    if (!drag_ || drag_->node_id != c.node_id) {
        error(error_code::kInvalidArgument, "release_node: node " + std::to_string(c.node_id) +
                                                " is not being dragged");
        return;
    }
    layout_.unpin(c.node_id);
    drag_.reset();
    set_state(SessionState::EditingWeights);
    evaluate_and_report(true);
}

void Session::on(const cmd::SetSonification& c)
{
    sonification_.mode = c.mode;
    publish_info();
    emit_audio();
}

void Session::on(const cmd::EvaluateNow&) { evaluate_and_report(true); }

void Session::on(const cmd::Shutdown&) { shutdown_ = true; }

void Session::evaluate_and_report(bool emit_result)
{
    const EvalMetrics m = trainer_.evaluate(Split::Validation);
    last_metrics_ = m;
    if (emit_result)
        emit(ev::EvalResult{m});
    emit_audio();
}

bool Session::advance()
{
    if (state_ != SessionState::Running || finished())
        return false;
    try {
        trainer_.step();
    } catch (const NumericError& e) {
        set_state(SessionState::Paused);
        error(error_code::kNumeric, e.what());
        return false;
    }
    if (trainer_.epoch_done()) {
        const Hyperparams hp = trainer_.hyperparams();
        const EpochMetrics m = trainer_.finish_epoch();
        last_metrics_ = EvalMetrics{m.val_accuracy, m.val_loss};
        publish_info();
        emit(ev::EpochCompleted{m, hp, trainer_.net().params});
        emit_audio();
        if (finished())
            set_state(SessionState::Paused);
    }
    return true;
}

void Session::tick_layout()
{
    layout_.sync_weights(trainer_.net());
    try {
        layout_.step(config_.layout);
    } catch (const NumericError& e) {
        // Reseed positions rather than leave NaNs in the scene.
        const LayoutGraph fresh = LayoutGraph::build(trainer_.net(), Rng::derive(config_.seed, layout_ticks_));
        layout_ = fresh;
        layout_.sync_weights(trainer_.net());
        error(error_code::kNumeric, std::string("layout: ") + e.what());
    }
    if (++layout_ticks_ % config_.layout_frame_every == 0)
        emit(ev::LayoutFrame{layout_.snapshot()});
}

void Session::run_script(const std::vector<ScriptEntry>& script)
{
    std::size_t next = 0;
    while (!shutdown_) {
        drain_posted();
        while (next < script.size() && !shutdown_ &&
               (script[next].at_step <= trainer_.global_step() || state_ != SessionState::Running))
            handle(script[next++].cmd);
        if (shutdown_ || finished())
            break;
        if (state_ != SessionState::Running) {
            if (next >= script.size())
                break;
            continue;
        }
        if (advance())
            tick_layout();
    }
}

void Session::post(Command command)
{
    {
        std::lock_guard lock(queue_mutex_);
        queue_.push_back(std::move(command));
    }
    queue_cv_.notify_one();
}

void Session::drain_posted()
{
    std::deque<Command> batch;
    {
        std::lock_guard lock(queue_mutex_);
        batch.swap(queue_);
    }
    for (const Command& c : batch)
        handle(c);
}

void Session::run_live(LiveClock clock)
{
    using Clock = std::chrono::steady_clock;
    if (!(clock.layout_hz > 0.0) || !(clock.audio_hz > 0.0))
        throw InvalidArgument("live clock rates must be positive");
    const auto layout_period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / clock.layout_hz));
    const auto audio_period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / clock.audio_hz));
    auto next_layout = Clock::now();
    auto next_audio = next_layout;
    emit(ev::StateChanged{state_});
    while (!shutdown_) {
        drain_posted();
        if (shutdown_)
            break;
        const auto now = Clock::now();
        if (now >= next_layout) {
            tick_layout();
            next_layout += layout_period;
            if (next_layout < now)
                next_layout = now + layout_period;
        }
        if (now >= next_audio) {
            emit_audio();
            next_audio += audio_period;
            if (next_audio < now)
                next_audio = now + audio_period;
        }
        if (advance())
            continue;
        std::unique_lock lock(queue_mutex_);
        queue_cv_.wait_until(lock, std::min(next_layout, next_audio), [this] { return !queue_.empty(); });
    }
}

} // namespace aiive
