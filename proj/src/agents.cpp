#include "dlmp/agents.hpp"

#include "dlmp/errors.hpp"
#include "dlmp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dlmp {

namespace {

void require_price(double c)
{
    if (!(c > 0.0) || !std::isfinite(c))
        throw DomainError("unit cost must be positive and finite, got " + std::to_string(c));
}

} // namespace

double LogUtility::value(double x) const
{
    if (x < 0.0) throw DomainError("consumption must be nonnegative");
    return a * std::log(b * x + 1.0);
}

double LogUtility::marginal(double x) const
{
    return a * b / (b * x + 1.0);
}

double LogUtility::consumption(double c) const
{
    require_price(c);
    return std::max((a * b - c) / (c * b), 0.0);
}

double utility(const Prosumer& pr, double x)
{
    return LogUtility{pr.a, pr.b}.value(x);
}

double payoff(const Prosumer& pr, double p, double c)
{
    return utility(pr, p + pr.g) - c * p;
}

double best_response(const Prosumer& pr, double c)
{
    return best_response(LogUtility{pr.a, pr.b}, pr.g, c);
}

Aggregator::Aggregator(std::string label, int node, std::vector<Prosumer> prosumers)
    : label_(std::move(label)), node_(node)
{
    if (prosumers.empty()) throw DomainError("aggregator " + label_ + " has no prosumers");
    for (const auto& p : prosumers) {
        if (!(p.a > 0.0) || !(p.b > 0.0) || !(p.g >= 0.0) || !std::isfinite(p.a) ||
            !std::isfinite(p.b) || !std::isfinite(p.g))
            throw DomainError("prosumer parameters need a > 0, b > 0, g >= 0");
        a_.push_back(p.a);
        b_.push_back(p.b);
        g_.push_back(p.g);
        ab_.push_back(p.a * p.b);
    }
    g_sum_ = std::accumulate(g_.begin(), g_.end(), 0.0);
}

double Aggregator::demand(double c) const
{
    require_price(c);
    return kernels::log_demand_sum(ab_, b_, g_, c);
}

AggregateResponse Aggregator::respond(double c) const
{
    AggregateResponse r;
    r.demand = demand(c);
    for (std::size_t i = 0; i < a_.size(); ++i) {
        const double x = std::max((ab_[i] - c) / (c * b_[i]), 0.0);
        r.welfare += a_[i] * std::log(b_[i] * x + 1.0);
    }
    return r;
}

double Aggregator::inverse_demand(double p) const
{
    if (!std::isfinite(p) || !(p + g_sum_ >= 0.0))
        throw DomainError("demand " + std::to_string(p) + " at or below the PV floor of " + label_);
    std::vector<std::size_t> order(a_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return ab_[i] > ab_[j]; });
    // Consumption sum_i max(a_i/c - 1/b_i, 0) is piecewise in c with breakpoints a_i b_i.
    double sa = 0.0, sinv = 0.0;
    for (std::size_t j = 0; j < order.size(); ++j) {
        sa += a_[order[j]];
        sinv += 1.0 / b_[order[j]];
        const double c = sa / (p + g_sum_ + sinv);
        const double next = j + 1 < order.size() ? ab_[order[j + 1]] : 0.0;
        if (c >= next) return c;
    }
    return sa / (p + g_sum_ + sinv);
}

double Aggregator::welfare_at_demand(double p) const
{
    const double c = inverse_demand(p);
    double w = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i)
        w += a_[i] * std::log(b_[i] * std::max(a_[i] / c - 1.0 / b_[i], 0.0) + 1.0);
    return w;
}

std::vector<Prosumer> Aggregator::prosumers() const
{
    std::vector<Prosumer> out;
    for (std::size_t i = 0; i < a_.size(); ++i) out.push_back({a_[i], b_[i], g_[i]});
    return out;
}

AggregateResponse aggregate_response(const Aggregator& agg, double c)
{
    return agg.respond(c);
}

} // namespace dlmp
