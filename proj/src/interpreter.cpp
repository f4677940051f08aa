#include "tagsr/interpreter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "tagsr/error.hpp"

namespace tagsr {

namespace {

constexpr std::string_view signal_prefix(Signal s)
{
    switch (s) {
    case Signal::U:
        return "u";
    case Signal::Y:
        return "y";
    case Signal::Xi:
        return "xi";
    }
    return "?";
}

std::optional<Signal> parse_signal(std::string_view s)
{
    if (s == "u") {
        return Signal::U;
    }
    if (s == "y") {
        return Signal::Y;
    }
    if (s == "xi") {
        return Signal::Xi;
    }
    return std::nullopt;
}

Signal leaf_signal(Label l)
{
    switch (l) {
    case Label::U:
        return Signal::U;
    case Label::Y:
        return Signal::Y;
    default:
        return Signal::Xi;
    }
}

NonlinearOp leaf_op(Label l)
{
    return static_cast<NonlinearOp>(static_cast<int>(l) - static_cast<int>(Label::NlSin));
}

class Interpreter {
public:
    explicit Interpreter(const DerivedTree& t) : tree_(t) {}

    std::vector<MonomialTerm> sum(int n) const
    {
        std::vector<MonomialTerm> terms;
        collect_sum(n, terms);
        return terms;
    }

private:
    const DerivedTree& tree_;

    void collect_sum(int n, std::vector<MonomialTerm>& terms) const
    {
        for (int c : tree_.nodes[n].children) {
            switch (tree_.nodes[c].label) {
            case Label::Expr0:
                collect_sum(c, terms);
                break;
            case Label::Expr1: {
                MonomialTerm term;
                collect_product(c, term);
                terms.push_back(std::move(term));
                break;
            }
            default: // '+' and the additive Xi(k)
                break;
            }
        }
    }

    void collect_product(int n, MonomialTerm& term) const
    {
        for (int c : tree_.nodes[n].children) {
            switch (tree_.nodes[c].label) {
            case Label::Expr1:
                collect_product(c, term);
                break;
            case Label::Expr2: {
                auto [factor, power] = factor_at(c);
                term.factors.insert(term.factors.end(), static_cast<std::size_t>(power), factor);
                break;
            }
            default: // par(C), times
                break;
            }
        }
    }

    // Walks an expr2 spine: shift / times / op markers above the base L.X leaf pair.
    std::pair<SignalFactor, int> factor_at(int n) const
    {
        SignalFactor f;
        int shifts = 0;
        int power = 1;
        for (;;) {
            const auto& kids = tree_.nodes[n].children;
            const auto& first = tree_.nodes[kids.at(0)];
            switch (first.label) {
            case Label::LinkU:
            case Label::LinkY:
            case Label::LinkXi:
                f.source = leaf_signal(tree_.nodes[kids.at(1)].label);
                f.link = first.link;
                f.delay = (f.source == Signal::U ? 0 : 1) + shifts;
                return {std::move(f), power};
            case Label::Shift:
                ++shifts;
                break;
            case Label::Times:
                ++power;
                break;
            case Label::Op:
                f.wrap = leaf_op(tree_.nodes[first.children.at(0)].label);
                break;
            default:
                throw GrammarError("malformed signal factor in derived tree");
            }
            n = kids.at(1);
        }
    }
};

void append_factor(std::string& s, const SignalFactor& f)
{
    const std::string shift = f.delay == 0 ? "(k)" : "(k-" + std::to_string(f.delay) + ")";
    std::vector<std::string> parts;
    for (int c = 0; c < f.link.size(); ++c) {
        if (f.link.bits[static_cast<std::size_t>(c)]) {
            parts.push_back(std::string(signal_prefix(f.source)) + std::to_string(c + 1) + shift);
        }
    }
    std::string inner;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        inner += (i ? "+" : "") + parts[i];
    }
    if (f.wrap) {
        s += std::string(op_name(*f.wrap)) + "(" + inner + ")";
    } else if (parts.size() > 1) {
        s += "(" + inner + ")";
    } else {
        s += inner;
    }
}

std::string format_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

bool SignalFactor::operator<(const SignalFactor& o) const
{
    return std::tie(source, delay, link, wrap) < std::tie(o.source, o.delay, o.link, o.wrap);
}

bool MonomialTerm::has_noise() const
{
    return std::any_of(factors.begin(), factors.end(), [](const auto& f) { return f.source == Signal::Xi; });
}

bool PolynomialModel::has_noise_terms() const
{
    return std::any_of(terms.begin(), terms.end(), [](const auto& t) { return t.has_noise(); });
}

bool PolynomialModel::has_output_feedback() const
{
    for (const auto& t : terms) {
        for (const auto& f : t.factors) {
            if (f.source != Signal::U) {
                return true;
            }
        }
    }
    return false;
}

bool PolynomialModel::same_structure(const PolynomialModel& other) const
{
    return terms == other.terms && channels == other.channels;
}

void canonicalize(PolynomialModel& model)
{
    if (model.theta) {
        throw GrammarError("canonicalize expects an unestimated model");
    }
    for (auto& t : model.terms) {
        std::sort(t.factors.begin(), t.factors.end());
    }
    std::sort(model.terms.begin(), model.terms.end());
    model.terms.erase(std::unique(model.terms.begin(), model.terms.end()), model.terms.end());
    model.max_delays = {};
    for (const auto& t : model.terms) {
        for (const auto& f : t.factors) {
            int& slot = f.source == Signal::U ? model.max_delays.u
                        : f.source == Signal::Y ? model.max_delays.y
                                                : model.max_delays.xi;
            slot = std::max(slot, f.delay);
        }
    }
}

PolynomialModel interpret(const DerivedTree& tree, ChannelCounts channels)
{
    if (tree.nodes.empty() || tree.nodes.front().label != Label::Expr0) {
        throw GrammarError("derived tree must be rooted at expr0");
    }
    PolynomialModel m;
    m.channels = channels;
    m.terms = Interpreter(tree).sum(0);
    canonicalize(m);
    return m;
}

std::string term_string(const MonomialTerm& term)
{
    if (term.factors.empty()) {
        return "1";
    }
    std::string s;
    for (std::size_t i = 0; i < term.factors.size();) {
        std::size_t j = i;
        while (j < term.factors.size() && term.factors[j] == term.factors[i]) {
            ++j;
        }
        if (!s.empty()) {
            s += "*";
        }
        append_factor(s, term.factors[i]);
        if (j - i > 1) {
            s += "^" + std::to_string(j - i);
        }
        i = j;
    }
    return s;
}

std::vector<std::string> to_equation_strings(const PolynomialModel& model)
{
    std::vector<std::string> lines;
    for (int ch = 0; ch < model.channels.outputs; ++ch) {
        std::string line = "y" + std::to_string(ch + 1) + "(k) = ";
        bool first = true;
        for (std::size_t i = 0; i < model.terms.size(); ++i) {
            const auto& term = model.terms[i];
            std::string coeff;
            bool negative = false;
            if (model.theta) {
                double c = (*model.theta)(static_cast<Eigen::Index>(i), ch);
                negative = std::signbit(c) && c != 0.0;
                coeff = format_number(std::fabs(c));
            } else {
                coeff = "c" + std::to_string(i + 1) + "_" + std::to_string(ch + 1);
            }
            if (first) {
                line += negative ? "-" : "";
            } else {
                line += negative ? " - " : " + ";
            }
            line += term.factors.empty() ? coeff : coeff + "*" + term_string(term);
            first = false;
        }
        line += (first ? "" : " + ") + std::string("xi") + std::to_string(ch + 1) + "(k)";
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string to_equation_string(const PolynomialModel& model)
{
    std::string out;
    for (const auto& line : to_equation_strings(model)) {
        out += line + "\n";
    }
    return out;
}

std::uint64_t model_signature(const PolynomialModel& model)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    mix(static_cast<std::uint64_t>(model.channels.inputs));
    mix(static_cast<std::uint64_t>(model.channels.outputs));
    mix(static_cast<std::uint64_t>(model.channels.noise));
    for (const auto& t : model.terms) {
        mix(0xA5A5'0000ULL + t.factors.size());
        for (const auto& f : t.factors) {
            mix(static_cast<std::uint64_t>(f.source));
            mix(static_cast<std::uint64_t>(f.delay));
            mix(f.wrap ? 1 + static_cast<std::uint64_t>(*f.wrap) : 0);
            for (auto b : f.link.bits) {
                mix(b);
            }
            mix(0xFFULL);
        }
    }
    return h;
}

nlohmann::json model_to_json(const PolynomialModel& model)
{
    using nlohmann::json;
    json terms = json::array();
    for (const auto& t : model.terms) {
        json factors = json::array();
        for (const auto& f : t.factors) {
            json mask = json::array();
            for (auto b : f.link.bits) {
                mask.push_back(static_cast<int>(b));
            }
            factors.push_back({{"source", signal_prefix(f.source)},
                               {"channel_mask", mask},
                               {"delay", f.delay},
                               {"wrap", f.wrap ? json(op_name(*f.wrap)) : json(nullptr)}});
        }
        terms.push_back({{"factors", factors}});
    }
    json theta = nullptr;
    if (model.theta) {
        theta = json::array();
        for (Eigen::Index i = 0; i < model.theta->rows(); ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < model.theta->cols(); ++j) {
                row.push_back((*model.theta)(i, j));
            }
            theta.push_back(row);
        }
    }
    return {{"channels",
             {{"inputs", model.channels.inputs},
              {"outputs", model.channels.outputs},
              {"noise", model.channels.noise}}},
            {"terms", terms},
            {"theta", theta},
            {"equation_strings", to_equation_strings(model)}};
}

PolynomialModel model_from_json(const nlohmann::json& j)
{
    try {
        PolynomialModel m;
        const auto& ch = j.at("channels");
        m.channels = {ch.at("inputs").get<int>(), ch.at("outputs").get<int>(), ch.at("noise").get<int>()};
        for (const auto& jt : j.at("terms")) {
            MonomialTerm term;
            for (const auto& jf : jt.at("factors")) {
                SignalFactor f;
                auto src = parse_signal(jf.at("source").get<std::string>());
                if (!src) {
                    throw DataError("unknown factor source");
                }
                f.source = *src;
                f.delay = jf.at("delay").get<int>();
                for (const auto& b : jf.at("channel_mask")) {
                    f.link.bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
                }
                if (f.link.size() != m.channels.of(f.source) || !f.link.valid()) {
                    throw DataError("invalid channel_mask");
                }
                if (f.delay < (f.source == Signal::U ? 0 : 1)) {
                    throw DataError("factor delay out of range");
                }
                if (jf.contains("wrap") && !jf.at("wrap").is_null()) {
                    auto op = parse_op(jf.at("wrap").get<std::string>());
                    if (!op) {
                        throw DataError("unknown wrap op");
                    }
                    f.wrap = *op;
                }
                term.factors.push_back(std::move(f));
            }
            std::sort(term.factors.begin(), term.factors.end());
            m.terms.push_back(std::move(term));
        }
        // Terms are stored canonically; keep the file's order so theta rows line up.
        for (const auto& t : m.terms) {
            for (const auto& f : t.factors) {
                int& slot = f.source == Signal::U ? m.max_delays.u : f.source == Signal::Y ? m.max_delays.y : m.max_delays.xi;
                slot = std::max(slot, f.delay);
            }
        }
        if (j.contains("theta") && !j.at("theta").is_null()) {
            const auto& jt = j.at("theta");
            Eigen::MatrixXd theta(static_cast<Eigen::Index>(jt.size()), m.channels.outputs);
            if (jt.size() != m.terms.size()) {
                throw DataError("theta rows must match term count");
            }
            for (std::size_t i = 0; i < jt.size(); ++i) {
                if (jt[i].size() != static_cast<std::size_t>(m.channels.outputs)) {
                    throw DataError("theta columns must match output count");
                }
                for (int c = 0; c < m.channels.outputs; ++c) {
                    theta(static_cast<Eigen::Index>(i), c) = jt[i][static_cast<std::size_t>(c)].get<double>();
                }
            }
            m.theta = std::move(theta);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model JSON: ") + e.what());
    }
}

} // namespace tagsr
