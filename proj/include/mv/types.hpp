#pragma once

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <new>
#include <thread>
#include <type_traits>

namespace mv {

using Word = uint64_t;
using Timestamp = uint64_t;

// Version-node stamps pack (ts << 1 | tbd), so timestamps live in 63 bits.
inline constexpr Timestamp kDeletedTs = (Timestamp{1} << 63) - 1;
inline constexpr Timestamp kInvalidTs = kDeletedTs - 1;

// Pattern written over reclaimed storage when poisoning is on.
inline constexpr Word kPoisonWord = 0xDEADBEEFDEADBEEFull;

inline constexpr std::size_t kCacheLine = 64;

// Thrown inside a transaction body to unwind back to the retry loop.
struct TxAbort {};

inline void cpuRelax() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_ia32_pause();
#elif defined(__aarch64__)
    asm volatile("yield" ::: "memory");
#endif
}

// Spin a little, then yield. The sandbox may have a single core, so every
// unbounded wait in the runtime goes through this.
class Backoff {
public:
    void pause() {
        if (++spins_ < 32) {
            cpuRelax();
        } else {
            std::this_thread::yield();
        }
    }
    void reset() { spins_ = 0; }

private:
    uint32_t spins_{0};
};

// A transactional memory word. The address of the cell is its identity.
struct alignas(8) Cell {
    std::atomic<Word> word{0};

    Cell() = default;
    explicit Cell(Word w) : word(w) {}
    Cell(const Cell&) = delete;
    Cell& operator=(const Cell&) = delete;

    // Non-transactional access; only valid while no transaction can reach the cell.
    Word unsafeLoad() const { return word.load(std::memory_order_relaxed); }
    void unsafeStore(Word w) { word.store(w, std::memory_order_relaxed); }
};
static_assert(sizeof(Cell) == sizeof(Word));

template <class T>
concept WordCodable = std::is_trivially_copyable_v<T> && sizeof(T) <= sizeof(Word);

template <WordCodable T>
constexpr Word encodeWord(T v) {
    if constexpr (sizeof(T) == sizeof(Word)) {
        return std::bit_cast<Word>(v);
    } else {
        Word w = 0;
        std::memcpy(&w, &v, sizeof(T));
        return w;
    }
}

template <WordCodable T>
constexpr T decodeWord(Word w) {
    if constexpr (sizeof(T) == sizeof(Word)) {
        return std::bit_cast<T>(w);
    } else {
        T v;
        std::memcpy(&v, &w, sizeof(T));
        return v;
    }
}

// Typed view over a Cell (pointers, integers, small PODs).
template <WordCodable T>
struct TCell : Cell {
    TCell() : Cell(encodeWord(T{})) {}
    explicit TCell(T v) : Cell(encodeWord(v)) {}

    T unsafeGet() const { return decodeWord<T>(unsafeLoad()); }
    void unsafeSet(T v) { unsafeStore(encodeWord(v)); }
};
static_assert(sizeof(TCell<void*>) == sizeof(Word));

// Large zero-initialized array of atomics. calloc hands back untouched
// zero pages for big sizes, so unused parts of a table never become resident.
template <class T>
class ZeroedArray {
    static_assert(std::is_trivially_destructible_v<T>);

public:
    ZeroedArray() = default;
    explicit ZeroedArray(std::size_t n) : size_(n) {
        data_ = static_cast<T*>(std::calloc(n, sizeof(T)));
        if (data_ == nullptr) throw std::bad_alloc();
    }
    ~ZeroedArray() { std::free(data_); }
    ZeroedArray(ZeroedArray&& o) noexcept : data_(o.data_), size_(o.size_) {
        o.data_ = nullptr;
        o.size_ = 0;
    }
    ZeroedArray& operator=(ZeroedArray&& o) noexcept {
        std::swap(data_, o.data_);
        std::swap(size_, o.size_);
        return *this;
    }
    ZeroedArray(const ZeroedArray&) = delete;
    ZeroedArray& operator=(const ZeroedArray&) = delete;

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    std::size_t size() const { return size_; }

private:
    T* data_{nullptr};
    std::size_t size_{0};
};

}  // namespace mv
