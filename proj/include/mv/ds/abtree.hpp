#pragma once

// Transactional leaf-oriented (a,b)-tree with a = 4, b = 16. Structural
// changes copy the affected nodes and publish them with one pointer write;
// value overwrites of existing keys happen in place.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "mv/types.hpp"

namespace mv::ds {

template <class TM>
class AbTree {
public:
    using Tx = typename TM::Tx;
    static constexpr const char* kName = "abtree";
    static constexpr uint32_t kA = 4;
    static constexpr uint32_t kB = 16;

    explicit AbTree(TM& tm) : tm_(tm) { root_.unsafeSet(newNode(Content{true, 0, {}, {}})); }
    ~AbTree() {
        std::vector<Node*> nodes;
        std::vector<Node*> stack{root_.unsafeGet()};
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            nodes.push_back(n);
            const uint64_t meta = n->meta.unsafeGet();
            if (!isLeaf(meta)) {
                for (uint32_t i = 0; i < count(meta); ++i) stack.push_back(child(n->vals[i].unsafeGet()));
            }
        }
        tm_.reclaimUnsafe(nodes);
        tm_.forgetUnsafe(&root_, sizeof(root_));
    }
    AbTree(const AbTree&) = delete;
    AbTree& operator=(const AbTree&) = delete;

    bool contains(Tx& tx, uint64_t k) {
        Node* n = tx.load(root_);
        for (;;) {
            const uint64_t meta = tx.load(n->meta);
            if (isLeaf(meta)) return leafSlot(tx, n, count(meta), k) >= 0;
            n = child(tx.load(n->vals[childIndex(tx, n, count(meta), k)]));
        }
    }

    bool insert(Tx& tx, uint64_t k, uint64_t v) { return put(tx, k, v, false); }
    // Inserts or overwrites; always writes. Returns true when inserted.
    bool upsert(Tx& tx, uint64_t k, uint64_t v) { return put(tx, k, v, true); }

    bool erase(Tx& tx, uint64_t k) {
        Path path;
        Node* leaf = descend(tx, k, path);
        Content cur = read(tx, leaf);
        const auto pos = std::find(cur.keys, cur.keys + cur.n, k) - cur.keys;
        if (pos == cur.n) return false;
        std::copy(cur.keys + pos + 1, cur.keys + cur.n, cur.keys + pos);
        std::copy(cur.vals + pos + 1, cur.vals + cur.n, cur.vals + pos);
        --cur.n;
        tx.retire(leaf);

        for (std::size_t level = path.size(); level-- > 0;) {
            auto [parent, idx] = path[level];
            if (cur.n >= kA) {
                tx.store(parent->vals[idx], encode(newNode(tx, cur)));
                return true;
            }
            Content pc = read(tx, parent);
            const uint32_t sib = idx > 0 ? idx - 1 : idx + 1;
            Node* sibling = child(pc.vals[sib]);
            const Content sc = read(tx, sibling);
            tx.retire(sibling);
            const uint32_t sepPos = std::min(idx, sib);
            const Content merged =
                sib < idx ? concat(sc, pc.keys[sepPos], cur) : concat(cur, pc.keys[sepPos], sc);
            if (merged.n >= 2 * kA) {
                Content lo;
                Content hi;
                const uint64_t sep = splitContent(merged, lo, hi);
                tx.store(parent->vals[sepPos], encode(newNode(tx, lo)));
                tx.store(parent->vals[sepPos + 1], encode(newNode(tx, hi)));
                tx.store(parent->keys[sepPos], sep);
                return true;
            }
            pc.vals[sepPos] = encode(newNode(tx, merged));
            std::copy(pc.vals + sepPos + 2, pc.vals + pc.n, pc.vals + sepPos + 1);
            std::copy(pc.keys + sepPos + 1, pc.keys + pc.n - 1, pc.keys + sepPos);
            --pc.n;
            tx.retire(parent);
            cur = pc;
        }
        if (!cur.leaf && cur.n == 1) {
            tx.store(root_, child(cur.vals[0]));
        } else {
            tx.store(root_, newNode(tx, cur));
        }
        return true;
    }

    // Keys in [lo, hi) in ascending order; `out` is overwritten when given.
    uint64_t rangeQuery(Tx& tx, uint64_t lo, uint64_t hi, std::vector<uint64_t>* out = nullptr) {
        if (out != nullptr) out->clear();
        uint64_t found = 0;
        std::vector<Node*> stack{tx.load(root_)};
        uint64_t keys[kB];
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            const uint64_t meta = tx.load(n->meta);
            const uint32_t c = count(meta);
            if (isLeaf(meta)) {
                for (uint32_t i = 0; i < c; ++i) {
                    const uint64_t k = tx.load(n->keys[i]);
                    if (k >= lo && k < hi) {
                        ++found;
                        if (out != nullptr) out->push_back(k);
                    }
                }
                continue;
            }
            for (uint32_t i = 0; i + 1 < c; ++i) keys[i] = tx.load(n->keys[i]);
            for (uint32_t i = c; i-- > 0;) {
                const bool belowHi = i == 0 || keys[i - 1] < hi;
                const bool aboveLo = i + 1 == c || keys[i] > lo;
                if (belowHi && aboveLo) stack.push_back(child(tx.load(n->vals[i])));
            }
        }
        return found;
    }

    uint64_t size(Tx& tx) { return rangeQuery(tx, 0, UINT64_MAX); }

    std::vector<uint64_t> keysUnsafe() const {
        std::vector<uint64_t> keys;
        collectUnsafe(root_.unsafeGet(), keys);
        return keys;
    }

    // Checks node occupancy, key order, routing bounds and uniform leaf depth.
    bool checkUnsafe() const {
        int leafDepth = -1;
        return checkNode(root_.unsafeGet(), 0, UINT64_MAX, 0, true, leafDepth);
    }

private:
    static constexpr uint32_t kCap = 2 * kB + 2;
    static constexpr uint64_t kLeafBit = uint64_t{1} << 32;

    struct Node {
        TCell<uint64_t> meta;  // entry count, plus kLeafBit for leaves
        TCell<uint64_t> keys[kB];
        TCell<uint64_t> vals[kB];  // leaf values, or child pointers
    };
    // Plain copy of a node. Leaves: n keys and n values. Internal nodes: n
    // children in vals and n - 1 routing keys.
    struct Content {
        bool leaf;
        uint32_t n;
        uint64_t keys[kCap];
        uint64_t vals[kCap];
    };
    using Path = std::vector<std::pair<Node*, uint32_t>>;

    static bool isLeaf(uint64_t meta) { return (meta & kLeafBit) != 0; }
    static uint32_t count(uint64_t meta) { return static_cast<uint32_t>(meta & 0xFFFFFFFF); }
    static Node* child(uint64_t w) { return reinterpret_cast<Node*>(w); }
    static uint64_t encode(Node* n) { return reinterpret_cast<uint64_t>(n); }

    static uint32_t childIndex(Tx& tx, Node* n, uint32_t c, uint64_t k) {
        uint32_t i = 0;
        while (i + 1 < c && k >= tx.load(n->keys[i])) ++i;
        return i;
    }
    static int leafSlot(Tx& tx, Node* n, uint32_t c, uint64_t k) {
        for (uint32_t i = 0; i < c; ++i) {
            if (tx.load(n->keys[i]) == k) return static_cast<int>(i);
        }
        return -1;
    }

    Node* descend(Tx& tx, uint64_t k, Path& path) {
        Node* n = tx.load(root_);
        for (;;) {
            const uint64_t meta = tx.load(n->meta);
            if (isLeaf(meta)) return n;
            const uint32_t i = childIndex(tx, n, count(meta), k);
            path.emplace_back(n, i);
            n = child(tx.load(n->vals[i]));
        }
    }

    static Content read(Tx& tx, Node* n) {
        Content c;
        const uint64_t meta = tx.load(n->meta);
        c.leaf = isLeaf(meta);
        c.n = count(meta);
        const uint32_t nk = c.leaf ? c.n : c.n - 1;
        for (uint32_t i = 0; i < nk; ++i) c.keys[i] = tx.load(n->keys[i]);
        for (uint32_t i = 0; i < c.n; ++i) c.vals[i] = tx.load(n->vals[i]);
        return c;
    }

    static Node* fill(Node* node, const Content& c) {
        node->meta.unsafeSet(c.n | (c.leaf ? kLeafBit : 0));
        const uint32_t nk = c.leaf ? c.n : c.n - 1;
        for (uint32_t i = 0; i < nk; ++i) node->keys[i].unsafeSet(c.keys[i]);
        for (uint32_t i = 0; i < c.n; ++i) node->vals[i].unsafeSet(c.vals[i]);
        return node;
    }
    static Node* newNode(const Content& c) { return fill(new Node, c); }
    static Node* newNode(Tx& tx, const Content& c) { return fill(tx.template alloc<Node>(), c); }

    // Joins two siblings; `sep` separates them in the parent.
    static Content concat(const Content& a, uint64_t sep, const Content& b) {
        Content m;
        m.leaf = a.leaf;
        m.n = a.n + b.n;
        std::copy(a.vals, a.vals + a.n, m.vals);
        std::copy(b.vals, b.vals + b.n, m.vals + a.n);
        if (a.leaf) {
            std::copy(a.keys, a.keys + a.n, m.keys);
            std::copy(b.keys, b.keys + b.n, m.keys + a.n);
        } else {
            std::copy(a.keys, a.keys + a.n - 1, m.keys);
            m.keys[a.n - 1] = sep;
            std::copy(b.keys, b.keys + b.n - 1, m.keys + a.n);
        }
        return m;
    }

    // Halves `c` and returns the separator between the halves.
    static uint64_t splitContent(const Content& c, Content& lo, Content& hi) {
        const uint32_t h = c.n / 2;
        lo.leaf = hi.leaf = c.leaf;
        lo.n = h;
        hi.n = c.n - h;
        std::copy(c.vals, c.vals + h, lo.vals);
        std::copy(c.vals + h, c.vals + c.n, hi.vals);
        if (c.leaf) {
            std::copy(c.keys, c.keys + h, lo.keys);
            std::copy(c.keys + h, c.keys + c.n, hi.keys);
            return c.keys[h];
        }
        std::copy(c.keys, c.keys + h - 1, lo.keys);
        std::copy(c.keys + h, c.keys + c.n - 1, hi.keys);
        return c.keys[h - 1];
    }

    bool put(Tx& tx, uint64_t k, uint64_t v, bool overwrite) {
        Path path;
        Node* leaf = descend(tx, k, path);
        const uint32_t c = count(tx.load(leaf->meta));
        if (const int slot = leafSlot(tx, leaf, c, k); slot >= 0) {
            if (overwrite) tx.store(leaf->vals[slot], v);
            return false;
        }
        Content cur = read(tx, leaf);
        const auto pos = std::lower_bound(cur.keys, cur.keys + cur.n, k) - cur.keys;
        std::copy_backward(cur.keys + pos, cur.keys + cur.n, cur.keys + cur.n + 1);
        std::copy_backward(cur.vals + pos, cur.vals + cur.n, cur.vals + cur.n + 1);
        cur.keys[pos] = k;
        cur.vals[pos] = v;
        ++cur.n;
        tx.retire(leaf);

        for (std::size_t level = path.size(); level-- > 0;) {
            auto [parent, idx] = path[level];
            if (cur.n <= kB) {
                tx.store(parent->vals[idx], encode(newNode(tx, cur)));
                return true;
            }
            Content lo;
            Content hi;
            const uint64_t sep = splitContent(cur, lo, hi);
            Content pc = read(tx, parent);
            std::copy_backward(pc.vals + idx + 1, pc.vals + pc.n, pc.vals + pc.n + 1);
            std::copy_backward(pc.keys + idx, pc.keys + pc.n - 1, pc.keys + pc.n);
            pc.vals[idx] = encode(newNode(tx, lo));
            pc.vals[idx + 1] = encode(newNode(tx, hi));
            pc.keys[idx] = sep;
            ++pc.n;
            tx.retire(parent);
            cur = pc;
        }
        if (cur.n <= kB) {
            tx.store(root_, newNode(tx, cur));
            return true;
        }
        Content lo;
        Content hi;
        Content top;
        top.leaf = false;
        top.n = 2;
        top.keys[0] = splitContent(cur, lo, hi);
        top.vals[0] = encode(newNode(tx, lo));
        top.vals[1] = encode(newNode(tx, hi));
        tx.store(root_, newNode(tx, top));
        return true;
    }

    static void collectUnsafe(Node* n, std::vector<uint64_t>& keys) {
        const uint64_t meta = n->meta.unsafeGet();
        for (uint32_t i = 0; i < count(meta); ++i) {
            if (isLeaf(meta)) {
                keys.push_back(n->keys[i].unsafeGet());
            } else {
                collectUnsafe(child(n->vals[i].unsafeGet()), keys);
            }
        }
    }

    static bool checkNode(Node* n, uint64_t lo, uint64_t hi, int depth, bool isRoot, int& leafDepth) {
        const uint64_t meta = n->meta.unsafeGet();
        const uint32_t c = count(meta);
        if (c > kB || (!isRoot && c < kA) || (isRoot && !isLeaf(meta) && c < 2)) return false;
        if (isLeaf(meta)) {
            if (leafDepth >= 0 && leafDepth != depth) return false;
            leafDepth = depth;
            for (uint32_t i = 0; i < c; ++i) {
                const uint64_t k = n->keys[i].unsafeGet();
                if (k < lo || k >= hi || (i > 0 && k <= n->keys[i - 1].unsafeGet())) return false;
            }
            return true;
        }
        for (uint32_t i = 0; i < c; ++i) {
            const uint64_t clo = i == 0 ? lo : n->keys[i - 1].unsafeGet();
            const uint64_t chi = i + 1 == c ? hi : n->keys[i].unsafeGet();
            if (clo > chi) return false;
            if (!checkNode(child(n->vals[i].unsafeGet()), clo, chi, depth + 1, false, leafDepth)) return false;
        }
        return true;
    }

    TM& tm_;
    TCell<Node*> root_;
};

}  // namespace mv::ds
