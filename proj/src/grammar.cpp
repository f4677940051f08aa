#include "tagsr/grammar.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <utility>

#include "tagsr/error.hpp"

namespace tagsr {

namespace {

constexpr std::array<std::string_view, 20> label_names{
    "expr0", "expr1", "expr2", "op",    "par",    "U",      "Y",      "Xi",     "plus",   "coeff",
    "times", "shift", "linkU", "linkY", "linkXi", "nl_sin", "nl_cos", "nl_abs", "nl_inv", "nl_exp",
};

constexpr std::array<std::string_view, tree_count> tree_names{
    "beta1", "beta2", "beta3", "beta4", "beta5", "beta6", "beta7",
    "beta8", "alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "alpha6",
};

constexpr std::array<std::string_view, 5> op_names{"sin", "cos", "abs", "inv", "exp"};

// Preorder (label, parent) list -> elementary tree.
ElementaryTree make_tree(TreeId id, TreeClass kind, std::vector<std::pair<Label, int>> spec)
{
    ElementaryTree t{id, kind, {}, -1, {}, -1};
    t.nodes.reserve(spec.size());
    for (auto [label, parent] : spec) {
        t.nodes.push_back({label, parent, {}});
        if (parent >= 0) {
            t.nodes[parent].children.push_back(static_cast<int>(t.nodes.size()) - 1);
        }
    }
    return t;
}

ElementaryTree make_factor_tree(TreeId id, Label link, Label signal)
{
    auto t = make_tree(id, TreeClass::Auxiliary,
                       {{Label::Expr1, -1},
                        {Label::Expr1, 0},
                        {Label::Times, 0},
                        {Label::Expr2, 0},
                        {link, 3},
                        {signal, 3}});
    t.foot = 1;
    t.adjunction_sites = {0, 3};
    return t;
}

// expr2 -> marker expr2*
ElementaryTree make_chain_tree(TreeId id, Label marker)
{
    auto t = make_tree(id, TreeClass::Auxiliary, {{Label::Expr2, -1}, {marker, 0}, {Label::Expr2, 0}});
    t.foot = 2;
    t.adjunction_sites = {0};
    return t;
}

ElementaryTree make_selector_tree(TreeId id, Label leaf)
{
    return make_tree(id, TreeClass::Initial, {{Label::Op, -1}, {leaf, 0}});
}

std::array<ElementaryTree, tree_count> build_table()
{
    auto alpha1 = make_tree(TreeId::Alpha1, TreeClass::Initial, {{Label::Expr0, -1}, {Label::Xi, 0}});
    alpha1.adjunction_sites = {0};

    auto beta1 = make_tree(TreeId::Beta1, TreeClass::Auxiliary,
                           {{Label::Expr0, -1},
                            {Label::Expr0, 0},
                            {Label::Plus, 0},
                            {Label::Expr1, 0},
                            {Label::Par, 3},
                            {Label::Coeff, 4}});
    beta1.foot = 1;
    beta1.adjunction_sites = {0, 3};

    auto beta8 = make_chain_tree(TreeId::Beta8, Label::Op);
    beta8.substitution_site = 1;

    return {
        beta1,
        make_factor_tree(TreeId::Beta2, Label::LinkY, Label::Y),
        make_factor_tree(TreeId::Beta3, Label::LinkXi, Label::Xi),
        make_factor_tree(TreeId::Beta4, Label::LinkU, Label::U),
        make_chain_tree(TreeId::Beta5, Label::Times),
        make_chain_tree(TreeId::Beta6, Label::Shift),
        make_chain_tree(TreeId::Beta7, Label::Shift),
        beta8,
        alpha1,
        make_selector_tree(TreeId::Alpha2, Label::NlSin),
        make_selector_tree(TreeId::Alpha3, Label::NlCos),
        make_selector_tree(TreeId::Alpha4, Label::NlAbs),
        make_selector_tree(TreeId::Alpha5, Label::NlInv),
        make_selector_tree(TreeId::Alpha6, Label::NlExp),
    };
}

bool is_chain_tree(TreeId id)
{
    return id == TreeId::Beta5 || id == TreeId::Beta6 || id == TreeId::Beta7 || id == TreeId::Beta8;
}

int base_delay(Signal s)
{
    return s == Signal::U ? 0 : 1;
}

// Per-op view of the signal-factor chains: a chain starts at a factor tree
// (beta2/3/4) and continues through beta5..beta8 adjoined on its expr2 spine.
struct ChainIndex {
    std::vector<int> chain_of;   // chain root per op, -1 when not on a chain
    std::vector<int> delay;      // per chain root
    std::vector<int> wraps;      // per chain root
    std::vector<std::vector<bool>> occupied;

    explicit ChainIndex(const DerivationTree& dt)
        : chain_of(dt.ops.size(), -1), delay(dt.ops.size(), 0), wraps(dt.ops.size(), 0), occupied(dt.ops.size())
    {
        for (std::size_t i = 0; i < dt.ops.size(); ++i) {
            const auto& op = dt.ops[i];
            occupied[i].assign(elementary_tree(op.tree).nodes.size(), false);
            if (op.parent >= 0 && static_cast<std::size_t>(op.parent) < i) {
                auto& occ = occupied[op.parent];
                if (op.address >= 0 && static_cast<std::size_t>(op.address) < occ.size()) {
                    occ[op.address] = true;
                }
            }
            if (auto s = factor_signal(op.tree); s && op.kind == OperationKind::Adjoin) {
                chain_of[i] = static_cast<int>(i);
                delay[i] = base_delay(*s);
            } else if (is_chain_tree(op.tree) && op.kind == OperationKind::Adjoin && op.parent >= 0 &&
                       static_cast<std::size_t>(op.parent) < i) {
                int root = chain_at(dt, {op.parent, op.address});
                chain_of[i] = root;
                if (root >= 0) {
                    if (op.tree == TreeId::Beta6 || op.tree == TreeId::Beta7) {
                        ++delay[root];
                    } else if (op.tree == TreeId::Beta8) {
                        ++wraps[root];
                    }
                }
            }
        }
    }

    // Chain whose expr2 spine contains `site`, or -1.
    int chain_at(const DerivationTree& dt, Site site) const
    {
        const auto parent_tree = dt.ops[site.op].tree;
        if (factor_signal(parent_tree) && site.address == 3) {
            return chain_of[site.op];
        }
        if (is_chain_tree(parent_tree) && site.address == 0) {
            return chain_of[site.op];
        }
        return -1;
    }

    Signal chain_signal(const DerivationTree& dt, int root) const { return *factor_signal(dt.ops[root].tree); }
};

// Chain-level selective adjunction constraints.
bool chain_allows(const DerivationTree& dt, const Grammar& g, const ChainIndex& idx, TreeId tree, Site site)
{
    if (!is_chain_tree(tree)) {
        return true;
    }
    const int root = idx.chain_at(dt, site);
    if (root < 0) {
        return false;
    }
    const Signal s = idx.chain_signal(dt, root);
    switch (tree) {
    case TreeId::Beta6:
        return s == Signal::Xi && idx.delay[root] < g.limits.max_delay;
    case TreeId::Beta7:
        return s != Signal::Xi && idx.delay[root] < g.limits.max_delay;
    case TreeId::Beta8:
        return idx.wraps[root] == 0;
    default:
        return true;
    }
}

bool is_adjunction_site(const ElementaryTree& t, int address)
{
    return std::find(t.adjunction_sites.begin(), t.adjunction_sites.end(), address) != t.adjunction_sites.end();
}

void append_adjoin(DerivationTree& dt, const Grammar& g, TreeId tree, Site site, const AdjoinPayload& payload)
{
    Operation op{tree, OperationKind::Adjoin, site.op, site.address, {}};
    if (auto s = factor_signal(tree)) {
        op.link = payload.link.bits.empty() ? LinkingArray{} : payload.link;
        if (op.link.bits.empty()) {
            op.link.bits.assign(static_cast<std::size_t>(g.channels.of(*s)), 0);
            op.link.bits.front() = 1;
        }
    }
    dt.ops.push_back(std::move(op));
    if (tree == TreeId::Beta8) {
        const int self = static_cast<int>(dt.ops.size()) - 1;
        dt.ops.push_back({selector_tree(*payload.op), OperationKind::Substitute, self,
                          elementary_tree(TreeId::Beta8).substitution_site, {}});
    }
}

} // namespace

bool is_nonterminal(Label label)
{
    return static_cast<int>(label) <= static_cast<int>(Label::Par);
}

std::string_view label_name(Label label)
{
    return label_names[static_cast<std::size_t>(label)];
}

std::string_view tree_name(TreeId id)
{
    return tree_names[static_cast<std::size_t>(id)];
}

std::optional<TreeId> parse_tree_id(std::string_view name)
{
    for (std::size_t i = 0; i < tree_names.size(); ++i) {
        if (tree_names[i] == name) {
            return static_cast<TreeId>(i);
        }
    }
    return std::nullopt;
}

std::string_view op_name(NonlinearOp op)
{
    return op_names[static_cast<std::size_t>(op)];
}

std::optional<NonlinearOp> parse_op(std::string_view name)
{
    for (std::size_t i = 0; i < op_names.size(); ++i) {
        if (op_names[i] == name) {
            return static_cast<NonlinearOp>(i);
        }
    }
    return std::nullopt;
}

TreeId selector_tree(NonlinearOp op)
{
    return static_cast<TreeId>(static_cast<int>(TreeId::Alpha2) + static_cast<int>(op));
}

std::optional<NonlinearOp> selector_op(TreeId id)
{
    const int k = static_cast<int>(id) - static_cast<int>(TreeId::Alpha2);
    if (k < 0 || k >= 5) {
        return std::nullopt;
    }
    return static_cast<NonlinearOp>(k);
}

const ElementaryTree& elementary_tree(TreeId id)
{
    static const auto table = build_table();
    return table[static_cast<std::size_t>(id)];
}

std::optional<Signal> factor_signal(TreeId id)
{
    switch (id) {
    case TreeId::Beta2:
        return Signal::Y;
    case TreeId::Beta3:
        return Signal::Xi;
    case TreeId::Beta4:
        return Signal::U;
    default:
        return std::nullopt;
    }
}

int ChannelCounts::of(Signal s) const
{
    switch (s) {
    case Signal::U:
        return inputs;
    case Signal::Y:
        return outputs;
    case Signal::Xi:
        return noise;
    }
    return 0;
}

bool Grammar::contains(TreeId id) const
{
    const auto& v = elementary_tree(id).kind == TreeClass::Initial ? initial_trees : auxiliary_trees;
    return std::find(v.begin(), v.end(), id) != v.end();
}

std::vector<TreeId> Grammar::tree_ids() const
{
    std::vector<TreeId> out = auxiliary_trees;
    out.insert(out.end(), initial_trees.begin(), initial_trees.end());
    return out;
}

Grammar build_grammar(std::string_view name,
                      ChannelCounts channels,
                      std::vector<NonlinearOp> nonlinear_ops,
                      GrammarLimits limits,
                      std::vector<TreeId> custom_trees)
{
    using T = TreeId;
    if (channels.inputs < 1 || channels.outputs < 1 || channels.noise < 1) {
        throw GrammarError("channel counts must be >= 1");
    }
    if (limits.max_delay < 1 || limits.max_complexity < 0) {
        throw GrammarError("max_delay must be >= 1 and complexity cap >= 0");
    }

    std::vector<TreeId> trees;
    if (name == "IP") {
        trees = {T::Beta1, T::Beta4, T::Alpha1};
    } else if (name == "LTI") {
        trees = {T::Beta1, T::Beta2, T::Beta7, T::Alpha1};
    } else if (name == "NARX") {
        trees = {T::Beta1, T::Beta2, T::Beta4, T::Beta5, T::Beta7, T::Alpha1};
    } else if (name == "NARMAX") {
        trees = {T::Beta1, T::Beta2, T::Beta3, T::Beta4, T::Beta5, T::Beta6, T::Beta7, T::Alpha1};
    } else if (name == "extNARX" || name == "expNARX") {
        trees = {T::Beta1, T::Beta2, T::Beta4, T::Beta5, T::Beta7, T::Beta8, T::Alpha1};
    } else if (name == "custom") {
        trees = std::move(custom_trees);
        for (auto id : trees) {
            if (auto op = selector_op(id);
                op && std::find(nonlinear_ops.begin(), nonlinear_ops.end(), *op) == nonlinear_ops.end()) {
                nonlinear_ops.push_back(*op);
            }
        }
        if (std::find(trees.begin(), trees.end(), T::Alpha1) == trees.end()) {
            throw GrammarError("custom grammar needs the initial tree alpha1");
        }
    } else {
        throw GrammarError("unknown grammar '" + std::string(name) + "'");
    }

    std::sort(nonlinear_ops.begin(), nonlinear_ops.end());
    nonlinear_ops.erase(std::unique(nonlinear_ops.begin(), nonlinear_ops.end()), nonlinear_ops.end());

    const bool has_wrap = std::find(trees.begin(), trees.end(), T::Beta8) != trees.end();
    if (has_wrap && nonlinear_ops.empty()) {
        throw GrammarError("beta8 requires at least one nonlinear op");
    }
    if (!has_wrap && !nonlinear_ops.empty()) {
        throw GrammarError("nonlinear ops given but grammar '" + std::string(name) + "' has no beta8");
    }
    for (auto op : nonlinear_ops) {
        trees.push_back(selector_tree(op));
    }

    Grammar g;
    g.name = std::string(name);
    g.channels = channels;
    g.limits = limits;
    g.nonlinear_ops = std::move(nonlinear_ops);
    std::sort(trees.begin(), trees.end());
    trees.erase(std::unique(trees.begin(), trees.end()), trees.end());
    for (auto id : trees) {
        (elementary_tree(id).kind == TreeClass::Initial ? g.initial_trees : g.auxiliary_trees).push_back(id);
    }
    return g;
}

bool LinkingArray::valid() const
{
    return std::any_of(bits.begin(), bits.end(), [](auto b) { return b != 0; }) &&
           std::all_of(bits.begin(), bits.end(), [](auto b) { return b <= 1; });
}

int DerivationTree::complexity() const
{
    return static_cast<int>(
        std::count_if(ops.begin(), ops.end(), [](const Operation& op) { return op.kind == OperationKind::Adjoin; }));
}

DerivationTree make_root(const Grammar& g)
{
    if (!g.contains(TreeId::Alpha1)) {
        throw GrammarError("grammar has no start tree");
    }
    return DerivationTree{{Operation{TreeId::Alpha1, OperationKind::Root, -1, -1, {}}}};
}

std::vector<Site> eligible_sites(const DerivationTree& dt, const Grammar& g, TreeId tree)
{
    std::vector<Site> out;
    if (!g.contains(tree) || elementary_tree(tree).kind != TreeClass::Auxiliary) {
        return out;
    }
    const Label root = elementary_tree(tree).root_label();
    const ChainIndex idx(dt);
    for (std::size_t i = 0; i < dt.ops.size(); ++i) {
        const auto& et = elementary_tree(dt.ops[i].tree);
        for (int address : et.adjunction_sites) {
            const Site site{static_cast<int>(i), address};
            if (!idx.occupied[i][address] && et.nodes[address].label == root &&
                chain_allows(dt, g, idx, tree, site)) {
                out.push_back(site);
            }
        }
    }
    return out;
}

std::vector<Move> legal_moves(const DerivationTree& dt, const Grammar& g)
{
    std::vector<Move> out;
    const ChainIndex idx(dt);
    for (std::size_t i = 0; i < dt.ops.size(); ++i) {
        const auto& et = elementary_tree(dt.ops[i].tree);
        for (int address : et.adjunction_sites) {
            if (idx.occupied[i][address]) {
                continue;
            }
            const Site site{static_cast<int>(i), address};
            const Label label = et.nodes[address].label;
            for (auto tree : g.auxiliary_trees) {
                if (elementary_tree(tree).root_label() == label && chain_allows(dt, g, idx, tree, site)) {
                    out.push_back({tree, site});
                }
            }
        }
    }
    return out;
}

DerivationTree adjoin(const DerivationTree& dt, const Grammar& g, TreeId tree, Site site, const AdjoinPayload& payload)
{
    const auto& et = elementary_tree(tree);
    if (!g.contains(tree) || et.kind != TreeClass::Auxiliary) {
        throw GrammarError(std::string(tree_name(tree)) + " is not an auxiliary tree of grammar " + g.name);
    }
    if (site.op < 0 || static_cast<std::size_t>(site.op) >= dt.ops.size()) {
        throw GrammarError("adjunction target operation out of range");
    }
    const auto& host = elementary_tree(dt.ops[site.op].tree);
    if (site.address < 0 || static_cast<std::size_t>(site.address) >= host.nodes.size()) {
        throw GrammarError("adjunction address out of range");
    }
    const Label site_label = host.nodes[site.address].label;
    if (site_label != et.root_label()) {
        throw GrammarError("label mismatch: cannot adjoin " + std::string(tree_name(tree)) + " (root " +
                           std::string(label_name(et.root_label())) + ") at a " + std::string(label_name(site_label)) +
                           " node");
    }
    if (!is_adjunction_site(host, site.address)) {
        throw GrammarError("node " + std::to_string(site.address) + " of " + std::string(tree_name(host.id)) +
                           " is not an adjunction site");
    }
    const ChainIndex idx(dt);
    if (idx.occupied[site.op][site.address]) {
        throw GrammarError("adjunction site already used");
    }
    if (!chain_allows(dt, g, idx, tree, site)) {
        throw GrammarError(std::string(tree_name(tree)) + " is not allowed on this signal factor");
    }
    if (dt.complexity() + 1 > g.limits.max_complexity) {
        throw GrammarError("complexity cap " + std::to_string(g.limits.max_complexity) + " exceeded");
    }
    if (auto s = factor_signal(tree); s && !payload.link.bits.empty()) {
        if (payload.link.size() != g.channels.of(*s) || !payload.link.valid()) {
            throw GrammarError("linking array must be a non-zero 0/1 vector of length " +
                               std::to_string(g.channels.of(*s)));
        }
    }
    if (tree == TreeId::Beta8) {
        if (!payload.op || std::find(g.nonlinear_ops.begin(), g.nonlinear_ops.end(), *payload.op) ==
                               g.nonlinear_ops.end()) {
            throw GrammarError("beta8 needs a nonlinear op enabled in the grammar");
        }
    }
    DerivationTree out = dt;
    append_adjoin(out, g, tree, site, payload);
    return out;
}

LinkingArray sample_linking_array(int channels, Rng& rng)
{
    LinkingArray link;
    link.bits.assign(static_cast<std::size_t>(channels), 0);
    if (channels == 1 || uniform01(rng) < 0.8) {
        link.bits[uniform_index(rng, static_cast<std::size_t>(channels))] = 1;
        return link;
    }
    // uniform over the 2^r - 1 non-zero patterns
    const std::uint64_t patterns = (std::uint64_t{1} << channels) - 1;
    const std::uint64_t code = 1 + std::uniform_int_distribution<std::uint64_t>(0, patterns - 1)(rng);
    for (int c = 0; c < channels; ++c) {
        link.bits[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>((code >> c) & 1U);
    }
    return link;
}

AdjoinPayload sample_payload(TreeId tree, const Grammar& g, Rng& rng)
{
    AdjoinPayload p;
    if (auto s = factor_signal(tree)) {
        p.link = sample_linking_array(g.channels.of(*s), rng);
    }
    if (tree == TreeId::Beta8) {
        p.op = g.nonlinear_ops[uniform_index(rng, g.nonlinear_ops.size())];
    }
    return p;
}

DerivationTree random_derivation(const Grammar& g, int max_complexity, Rng& rng)
{
    DerivationTree dt = make_root(g);
    const int cap = std::min(std::max(max_complexity, 0), g.limits.max_complexity);
    const int target = std::uniform_int_distribution<int>(0, cap)(rng);
    for (int step = 0; step < target; ++step) {
        const auto moves = legal_moves(dt, g);
        if (moves.empty()) {
            break;
        }
        const auto& m = moves[uniform_index(rng, moves.size())];
        append_adjoin(dt, g, m.tree, m.site, sample_payload(m.tree, g, rng));
    }
    return dt;
}

std::vector<std::string> validate(const DerivationTree& dt, const Grammar& g)
{
    std::vector<std::string> v;
    if (dt.ops.empty()) {
        v.emplace_back("derivation tree is empty");
        return v;
    }
    const auto& root = dt.ops.front();
    if (root.kind != OperationKind::Root || root.tree != TreeId::Alpha1 || root.parent != -1) {
        v.emplace_back("op 0 must be the alpha1 root instance");
    }
    if (!g.contains(root.tree)) {
        v.emplace_back("root tree " + std::string(tree_name(root.tree)) + " not in grammar");
    }

    std::vector<std::vector<int>> used(dt.ops.size());
    std::vector<int> substitutions(dt.ops.size(), 0);
    bool structure_ok = true;
    for (std::size_t i = 1; i < dt.ops.size(); ++i) {
        const auto& op = dt.ops[i];
        const std::string where = "op " + std::to_string(i) + " (" + std::string(tree_name(op.tree)) + "): ";
        const auto& et = elementary_tree(op.tree);
        if (!g.contains(op.tree)) {
            v.push_back(where + "tree not in grammar " + g.name);
        }
        if (op.kind == OperationKind::Root) {
            v.push_back(where + "more than one root instance");
            structure_ok = false;
            continue;
        }
        if (op.parent < 0 || static_cast<std::size_t>(op.parent) >= i) {
            v.push_back(where + "parent must reference an earlier operation");
            structure_ok = false;
            continue;
        }
        const auto& host = elementary_tree(dt.ops[op.parent].tree);
        if (op.address < 0 || static_cast<std::size_t>(op.address) >= host.nodes.size()) {
            v.push_back(where + "address out of range");
            structure_ok = false;
            continue;
        }
        if (std::find(used[op.parent].begin(), used[op.parent].end(), op.address) != used[op.parent].end()) {
            v.push_back(where + "site already used by another operation");
        }
        used[op.parent].push_back(op.address);

        if (op.kind == OperationKind::Adjoin) {
            if (et.kind != TreeClass::Auxiliary) {
                v.push_back(where + "adjoined tree must be auxiliary");
            } else if (!is_adjunction_site(host, op.address)) {
                v.push_back(where + "address is not an adjunction site");
            } else if (host.nodes[op.address].label != et.root_label()) {
                v.push_back(where + "label mismatch at adjunction site");
            }
        } else {
            if (et.kind != TreeClass::Initial || et.root_label() != Label::Op) {
                v.push_back(where + "only selector trees can be substituted");
            } else if (op.address != host.substitution_site) {
                v.push_back(where + "address is not a substitution site");
            } else {
                ++substitutions[op.parent];
                auto nl = selector_op(op.tree);
                if (std::find(g.nonlinear_ops.begin(), g.nonlinear_ops.end(), *nl) == g.nonlinear_ops.end()) {
                    v.push_back(where + "nonlinear op not enabled");
                }
            }
        }

        if (auto s = factor_signal(op.tree)) {
            if (op.link.size() != g.channels.of(*s)) {
                v.push_back(where + "linking array length " + std::to_string(op.link.size()) + " != channel count " +
                            std::to_string(g.channels.of(*s)));
            } else if (!op.link.valid()) {
                v.push_back(where + "linking array must be non-zero (L_X != 0)");
            }
        } else if (!op.link.bits.empty()) {
            v.push_back(where + "unexpected linking array payload");
        }
    }
    for (std::size_t i = 0; i < dt.ops.size(); ++i) {
        if (dt.ops[i].tree == TreeId::Beta8 && substitutions[i] != 1) {
            v.push_back("op " + std::to_string(i) + " (beta8): needs exactly one substituted selector tree");
        }
    }

    if (structure_ok) {
        const ChainIndex idx(dt);
        for (std::size_t i = 1; i < dt.ops.size(); ++i) {
            const auto& op = dt.ops[i];
            if (!is_chain_tree(op.tree) || op.kind != OperationKind::Adjoin) {
                continue;
            }
            const std::string where = "op " + std::to_string(i) + " (" + std::string(tree_name(op.tree)) + "): ";
            const int root_op = idx.chain_of[i];
            if (root_op < 0) {
                v.push_back(where + "not attached to a signal factor");
                continue;
            }
            const Signal s = idx.chain_signal(dt, root_op);
            if (op.tree == TreeId::Beta6 && s != Signal::Xi) {
                v.push_back(where + "noise delay on a non-noise factor");
            }
            if (op.tree == TreeId::Beta7 && s == Signal::Xi) {
                v.push_back(where + "input/output delay on a noise factor");
            }
        }
        for (std::size_t r = 0; r < dt.ops.size(); ++r) {
            if (idx.chain_of[r] != static_cast<int>(r)) {
                continue;
            }
            if (idx.delay[r] > g.limits.max_delay) {
                v.push_back("factor at op " + std::to_string(r) + ": delay " + std::to_string(idx.delay[r]) +
                            " exceeds max_delay " + std::to_string(g.limits.max_delay));
            }
            if (idx.wraps[r] > 1) {
                v.push_back("factor at op " + std::to_string(r) + ": more than one nonlinear wrap");
            }
        }
    }

    if (dt.complexity() > g.limits.max_complexity) {
        v.push_back("complexity " + std::to_string(dt.complexity()) + " exceeds cap " +
                    std::to_string(g.limits.max_complexity));
    }
    return v;
}

std::vector<int> subtree_indices(const DerivationTree& dt, int op)
{
    std::vector<bool> in(dt.ops.size(), false);
    std::vector<int> out;
    in[op] = true;
    out.push_back(op);
    for (std::size_t i = static_cast<std::size_t>(op) + 1; i < dt.ops.size(); ++i) {
        const int p = dt.ops[i].parent;
        if (p >= 0 && in[p]) {
            in[i] = true;
            out.push_back(static_cast<int>(i));
        }
    }
    return out;
}

namespace {

// Copies ops whose `keep` flag is set, remapping parent indices.
DerivationTree compact(const DerivationTree& dt, const std::vector<bool>& keep)
{
    std::vector<int> remap(dt.ops.size(), -1);
    DerivationTree out;
    for (std::size_t i = 0; i < dt.ops.size(); ++i) {
        if (!keep[i]) {
            continue;
        }
        Operation op = dt.ops[i];
        if (op.parent >= 0) {
            op.parent = remap[op.parent];
        }
        remap[i] = static_cast<int>(out.ops.size());
        out.ops.push_back(std::move(op));
    }
    return out;
}

} // namespace

DerivationTree remove_subtree(const DerivationTree& dt, int op)
{
    if (op <= 0 || static_cast<std::size_t>(op) >= dt.ops.size()) {
        throw GrammarError("cannot remove the root or an out-of-range operation");
    }
    std::vector<bool> keep(dt.ops.size(), true);
    for (int i : subtree_indices(dt, op)) {
        keep[i] = false;
    }
    return compact(dt, keep);
}

DerivationTree graft(const DerivationTree& host, Site site, const DerivationTree& donor, int donor_op)
{
    DerivationTree out = host;
    const auto sub = subtree_indices(donor, donor_op);
    std::vector<int> remap(donor.ops.size(), -1);
    for (int i : sub) {
        Operation op = donor.ops[i];
        if (i == donor_op) {
            op.parent = site.op;
            op.address = site.address;
        } else {
            op.parent = remap[op.parent];
        }
        remap[i] = static_cast<int>(out.ops.size());
        out.ops.push_back(std::move(op));
    }
    return out;
}

DerivedTree derive(const DerivationTree& dt)
{
    DerivedTree out;
    // node_of[op][address] -> derived node index
    std::vector<std::vector<int>> node_of(dt.ops.size());

    auto copy_children = [&](const ElementaryTree& et, int src, int dst, std::vector<int>& map, int foot_target) {
        // Depth-first copy of et's subtree below `src` into derived node `dst`.
        std::vector<std::pair<int, int>> stack{{src, dst}};
        while (!stack.empty()) {
            auto [s, d] = stack.back();
            stack.pop_back();
            std::vector<int> kids;
            for (int c : et.nodes[s].children) {
                int idx;
                if (c == et.foot) {
                    idx = foot_target;
                } else {
                    idx = static_cast<int>(out.nodes.size());
                    out.nodes.push_back({et.nodes[c].label, {}, {}});
                    stack.emplace_back(c, idx);
                }
                map[c] = idx;
                kids.push_back(idx);
            }
            out.nodes[d].children = std::move(kids);
        }
    };

    for (std::size_t i = 0; i < dt.ops.size(); ++i) {
        const auto& op = dt.ops[i];
        const auto& et = elementary_tree(op.tree);
        auto& map = node_of[i];
        map.assign(et.nodes.size(), -1);
        if (op.kind == OperationKind::Root) {
            out.nodes.push_back({et.root_label(), {}, {}});
            map[0] = 0;
            copy_children(et, 0, 0, map, -1);
        } else {
            const int x = node_of[op.parent][op.address];
            map[0] = x;
            int foot_node = -1;
            if (op.kind == OperationKind::Adjoin) {
                // The foot takes over x's current children; x becomes the aux root.
                foot_node = static_cast<int>(out.nodes.size());
                out.nodes.push_back({et.nodes[et.foot].label, std::move(out.nodes[x].children), {}});
            }
            copy_children(et, 0, x, map, foot_node);
        }
        if (factor_signal(op.tree)) {
            out.nodes[map[4]].link = op.link;
        }
    }
    return out;
}

bool DerivedTree::operator==(const DerivedTree& other) const
{
    if (nodes.size() != other.nodes.size()) {
        return false;
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].label != other.nodes[i].label || nodes[i].children != other.nodes[i].children ||
            nodes[i].link != other.nodes[i].link) {
            return false;
        }
    }
    return true;
}

std::string DerivedTree::to_string() const
{
    std::ostringstream os;
    auto rec = [&](auto&& self, int n) -> void {
        const auto& node = nodes[n];
        os << label_name(node.label);
        if (!node.link.bits.empty()) {
            os << '[';
            for (auto b : node.link.bits) {
                os << static_cast<int>(b);
            }
            os << ']';
        }
        if (!node.children.empty()) {
            os << '(';
            for (std::size_t i = 0; i < node.children.size(); ++i) {
                if (i) {
                    os << ' ';
                }
                self(self, node.children[i]);
            }
            os << ')';
        }
    };
    rec(rec, 0);
    return os.str();
}

} // namespace tagsr
