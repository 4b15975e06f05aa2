#include "mv/history.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mv {

const char* eventKindName(EventKind k) {
    switch (k) {
        case EventKind::Begin: return "begin";
        case EventKind::Read: return "read";
        case EventKind::Write: return "write";
        case EventKind::Commit: return "commit";
        case EventKind::Abort: return "abort";
    }
    return "?";
}

HistoryRecorder::HistoryRecorder(uint32_t slots) : slots_(slots), bufs_(std::make_unique<Buffer[]>(slots)) {}

void HistoryRecorder::push(ThreadId t, uint64_t txn, uint32_t attempt, EventKind k, uint64_t cell, Word v) {
    Buffer& b = bufs_[t];
    b.txn = txn;
    b.attempt = attempt;
    const uint64_t seq = seq_.fetch_add(1, std::memory_order_seq_cst);
    b.events.push_back({seq, txn, attempt, k, cell, v});
}

History HistoryRecorder::collect() const {
    History all;
    for (uint32_t t = 0; t < slots_; ++t) all.insert(all.end(), bufs_[t].events.begin(), bufs_[t].events.end());
    std::sort(all.begin(), all.end(), [](const HistoryEvent& a, const HistoryEvent& b) { return a.seq < b.seq; });
    return all;
}

void HistoryRecorder::clear() {
    for (uint32_t t = 0; t < slots_; ++t) bufs_[t].events.clear();
}

void writeHistory(std::ostream& out, const History& h) {
    for (const HistoryEvent& e : h) {
        out << e.seq << ' ' << e.txn << ' ' << e.attempt << ' ' << eventKindName(e.kind) << ' ' << e.cell << ' '
            << e.value << '\n';
    }
}

History readHistory(std::istream& in) {
    History h;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        HistoryEvent e;
        std::string kind;
        if (!(ls >> e.seq >> e.txn >> e.attempt >> kind >> e.cell >> e.value)) {
            throw std::runtime_error("history line " + std::to_string(lineNo) + ": expected 6 fields");
        }
        if (kind == "begin") {
            e.kind = EventKind::Begin;
        } else if (kind == "read") {
            e.kind = EventKind::Read;
        } else if (kind == "write") {
            e.kind = EventKind::Write;
        } else if (kind == "commit") {
            e.kind = EventKind::Commit;
        } else if (kind == "abort") {
            e.kind = EventKind::Abort;
        } else {
            throw std::runtime_error("history line " + std::to_string(lineNo) + ": unknown kind '" + kind + "'");
        }
        h.push_back(e);
    }
    std::sort(h.begin(), h.end(), [](const HistoryEvent& a, const HistoryEvent& b) { return a.seq < b.seq; });
    return h;
}

}  // namespace mv
