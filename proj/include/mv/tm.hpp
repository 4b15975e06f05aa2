#pragma once

// Uniform view over the two runtimes for drivers that are templated on the
// TM type (stress checker, benchmark).

#include <optional>
#include <string>
#include <string_view>

#include "mv/dctl.hpp"
#include "mv/multiverse.hpp"

namespace mv {

enum class TmKind { Multiverse, Dctl, ModeQOnly, ModeUOnly };

inline const char* tmKindName(TmKind k) {
    switch (k) {
        case TmKind::Multiverse: return "multiverse";
        case TmKind::Dctl: return "dctl";
        case TmKind::ModeQOnly: return "modeQOnly";
        case TmKind::ModeUOnly: return "modeUOnly";
    }
    return "?";
}

inline std::optional<TmKind> parseTmKind(std::string_view s) {
    for (TmKind k : {TmKind::Multiverse, TmKind::Dctl, TmKind::ModeQOnly, TmKind::ModeUOnly}) {
        if (s == tmKindName(k)) return k;
    }
    return std::nullopt;
}

// Sets the fixed-mode field for the Multiverse variants; Dctl ignores it.
inline Config configFor(TmKind k, Config base) {
    base.fixedMode = k == TmKind::ModeQOnly   ? FixedMode::QOnly
                     : k == TmKind::ModeUOnly ? FixedMode::UOnly
                                              : FixedMode::Adaptive;
    return base;
}

struct TmSnapshot {
    uint64_t commits{0};
    uint64_t aborts{0};
    uint64_t versionedCommits{0};
    uint64_t modeCycles{0};
    uint64_t liveVersionNodes{0};
    uint64_t poisonHits{0};
    Mode mode{Mode::Q};
};

inline TmSnapshot snapshot(const Multiverse& tm) {
    const MultiverseStats s = tm.stats();
    return {s.tx.commits, s.tx.aborts, s.tx.versionedCommits, s.modeCycles, s.liveVersionNodes, s.poisonHits, s.mode};
}

inline TmSnapshot snapshot(const Dctl& tm) {
    const DctlStats s = tm.stats();
    return {s.commits, s.aborts, 0, 0, 0, s.poisonHits, Mode::Q};
}

}  // namespace mv
