#pragma once

// Per-stock three-state trading machine driven by s-scores.

#include "statarb/core.hpp"
#include "statarb/factors.hpp"

#include <cmath>
#include <iostream>
#include <string>

namespace statarb::signals {

struct Thresholds {
    double open_long = 1.25;    ///< open long when g < -open_long
    double open_short = 1.25;   ///< open short when g > +open_short
    double close_long = 0.50;   ///< close long when g > -close_long
    double close_short = 0.75;  ///< close short when g < +close_short

    /// Symmetric pair used by the grid searches: g_ol = g_os = open, g_cl = g_cs = close.
    static Thresholds symmetric(double open, double close) { return {open, open, close, close}; }

    void validate() const {
        if (!(open_long > 0.0) || !(open_short > 0.0))
            throw ConfigError("opening thresholds must be positive");
    }
};

/// Grid-search optima per provider; the classic 1.25/1.25/0.5/0.75 set is Thresholds{}.
inline Thresholds default_thresholds(factors::Provider p) {
    switch (p) {
        case factors::Provider::Pca: return Thresholds::symmetric(1.10, -0.50);
        case factors::Provider::Lstm: return Thresholds::symmetric(1.10, -0.15);
        case factors::Provider::ExistingEtf: return Thresholds::symmetric(2.10, 0.75);
        case factors::Provider::SectorEtf: return Thresholds::symmetric(1.95, 0.40);
    }
    return {};
}

enum class PositionState : int { Short = -1, Flat = 0, Long = 1 };

enum class Action { OpenLong, OpenShort, CloseLong, CloseShort, Hold };

inline const char* to_string(Action a) {
    switch (a) {
        case Action::OpenLong: return "open_long";
        case Action::OpenShort: return "open_short";
        case Action::CloseLong: return "close_long";
        case Action::CloseShort: return "close_short";
        case Action::Hold: return "hold";
    }
    return "?";
}

/// Strict-inequality rules; exactly one decision per stock per day.
inline Action decide(double g, PositionState state, const Thresholds& th) {
    if (!std::isfinite(g)) {
        std::clog << "warning: non-finite s-score, holding\n";
        return Action::Hold;
    }
    switch (state) {
        case PositionState::Flat:
            if (g < -th.open_long) return Action::OpenLong;
            if (g > th.open_short) return Action::OpenShort;
            return Action::Hold;
        case PositionState::Long:
            return g > -th.close_long ? Action::CloseLong : Action::Hold;
        case PositionState::Short:
            return g < th.close_short ? Action::CloseShort : Action::Hold;
    }
    return Action::Hold;
}

inline PositionState apply(Action action, PositionState state) {
    switch (action) {
        case Action::Hold: return state;
        case Action::OpenLong:
        case Action::OpenShort:
            if (state != PositionState::Flat)
                throw ContractError(std::string("illegal transition: ") + to_string(action) + " while open");
            return action == Action::OpenLong ? PositionState::Long : PositionState::Short;
        case Action::CloseLong:
            if (state != PositionState::Long) throw ContractError("illegal transition: close_long without long");
            return PositionState::Flat;
        case Action::CloseShort:
            if (state != PositionState::Short) throw ContractError("illegal transition: close_short without short");
            return PositionState::Flat;
    }
    return state;
}

}  // namespace statarb::signals
