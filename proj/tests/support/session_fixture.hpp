#pragma once

#include <memory>
#include <vector>

#include "aiive/dataset.hpp"
#include "aiive/session.hpp"

namespace testing_support {

inline std::shared_ptr<const aiive::Dataset> small_dataset(std::uint64_t seed = 3)
{
    aiive::SyntheticConfig cfg;
    cfg.counts = {256, 70, 42};
    cfg.seed = seed;
    return std::make_shared<const aiive::Dataset>(aiive::generate_synthetic(cfg));
}

inline aiive::SessionConfig small_config(std::shared_ptr<const aiive::Dataset> ds)
{
    aiive::SessionConfig c;
    c.dataset = std::move(ds);
    c.hidden1 = 3;
    c.hidden2 = 4;
    c.hyperparams.batch_size = 32;
    c.seed = 11;
    return c;
}

// Collects every event a session emits.
struct Recorder {
    std::vector<aiive::Event> events;

    explicit Recorder(aiive::Session& s)
    {
        s.subscribe([this](const aiive::Event& e) { events.push_back(e); });
    }

    template <class T>
    std::vector<T> all() const
    {
        std::vector<T> out;
        for (const auto& e : events)
            if (const T* p = std::get_if<T>(&e))
                out.push_back(*p);
        return out;
    }

    template <class T>
    std::size_t count() const
    {
        return all<T>().size();
    }

    void clear() { events.clear(); }
};

} // namespace testing_support
