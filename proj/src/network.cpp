#include "dlmp/network.hpp"

#include "dlmp/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dlmp {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s)
{
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

double to_double(const std::string& s, int line_no)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw FeederError(FeederErrc::malformed,
                          "line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

int to_int(const std::string& s, int line_no)
{
    int v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw FeederError(FeederErrc::malformed,
                          "line " + std::to_string(line_no) + ": bad integer '" + s + "'");
    return v;
}

std::string fmt_exact(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

FeederDescription parse_description(std::string_view text)
{
    FeederDescription d;
    std::string section;
    bool have_mva = false, have_kv = false;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto h = raw.find('#'); h != std::string_view::npos) raw = raw.substr(0, h);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw FeederError(FeederErrc::malformed,
                                  "line " + std::to_string(line_no) + ": bad section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        if (section == "base" || section == "limits") {
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw FeederError(FeederErrc::malformed,
                                  "line " + std::to_string(line_no) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const double v = to_double(trim(line.substr(eq + 1)), line_no);
            if (section == "base" && key == "mva") { d.base_mva = v; have_mva = true; }
            else if (section == "base" && key == "kv") { d.base_kv = v; have_kv = true; }
            else if (section == "base" && key == "v0_pu") d.v0_pu = v;
            else if (section == "base" && key == "angle0_rad") d.angle0_rad = v;
            else if (section == "limits" && key == "epsilon_pu") d.epsilon_pu = v;
            else
                throw FeederError(FeederErrc::malformed,
                                  "line " + std::to_string(line_no) + ": unknown key " + key);
            continue;
        }
        const auto tok = split_ws(line);
        if (section == "nodes") {
            if (tok.empty() || tok.size() > 2)
                throw FeederError(FeederErrc::malformed,
                                  "line " + std::to_string(line_no) + ": expected 'id [name]'");
            d.buses.push_back({to_int(tok[0], line_no), tok.size() == 2 ? tok[1] : tok[0]});
        } else if (section == "lines") {
            if (tok.size() != 6)
                throw FeederError(FeederErrc::malformed,
                                  "line " + std::to_string(line_no) +
                                      ": expected 'from to r_pu x_pu p_limit_pu q_limit_pu'");
            d.lines.push_back({to_int(tok[0], line_no), to_int(tok[1], line_no),
                               to_double(tok[2], line_no), to_double(tok[3], line_no),
                               to_double(tok[4], line_no), to_double(tok[5], line_no)});
        } else if (section == "aggregators") {
            if (tok.size() != 2)
                throw FeederError(FeederErrc::malformed,
                                  "line " + std::to_string(line_no) + ": expected 'label node'");
            d.aggregators.push_back({tok[0], to_int(tok[1], line_no)});
        } else {
            throw FeederError(FeederErrc::malformed,
                              "line " + std::to_string(line_no) + ": data outside a known section");
        }
    }
    if (!have_mva || !have_kv)
        throw FeederError(FeederErrc::malformed, "[base] must declare mva and kv");
    return d;
}

} // namespace

int RadialNetwork::internal_node(int external_id) const
{
    const auto it = std::find(bus_id.begin(), bus_id.end(), external_id);
    if (it == bus_id.end())
        throw FeederError(FeederErrc::unknown_aggregator_node,
                          "no bus with id " + std::to_string(external_id));
    return static_cast<int>(it - bus_id.begin());
}

RadialNetwork build_network(const FeederDescription& d)
{
    if (!(d.base_mva > 0.0) || !(d.base_kv > 0.0))
        throw FeederError(FeederErrc::malformed, "base quantities must be positive");
    if (!(d.epsilon_pu > 0.0))
        throw FeederError(FeederErrc::invalid_limit, "epsilon_pu must be positive");
    if (!(d.v0_pu > 0.0) || !std::isfinite(d.angle0_rad))
        throw FeederError(FeederErrc::malformed, "invalid substation reference");

    std::map<int, std::string> names;
    for (const auto& b : d.buses)
        if (!names.emplace(b.id, b.name).second)
            throw FeederError(FeederErrc::malformed, "bus " + std::to_string(b.id) + " declared twice");
    if (names.size() < 2)
        throw FeederError(FeederErrc::malformed, "feeder needs a substation and one load node");

    std::set<std::pair<int, int>> seen;
    std::map<int, std::size_t> incoming; // bus -> line index
    std::map<int, std::vector<int>> children;
    for (std::size_t i = 0; i < d.lines.size(); ++i) {
        const auto& l = d.lines[i];
        const std::string tag = std::to_string(l.from) + "->" + std::to_string(l.to);
        if (!names.count(l.from) || !names.count(l.to))
            throw FeederError(FeederErrc::malformed, "line " + tag + " references an undeclared bus");
        if (l.from == l.to) throw FeederError(FeederErrc::cycle, "self loop at " + tag);
        if (!seen.emplace(l.from, l.to).second)
            throw FeederError(FeederErrc::duplicate_line, tag);
        if (!(l.r_pu >= 0.0) || !(l.x_pu >= 0.0) || !(l.r_pu > 0.0 || l.x_pu > 0.0) ||
            !std::isfinite(l.r_pu) || !std::isfinite(l.x_pu))
            throw FeederError(FeederErrc::nonpositive_impedance, tag);
        if (!(l.p_limit_pu > 0.0) || !(l.q_limit_pu > 0.0))
            throw FeederError(FeederErrc::invalid_limit, tag);
        if (!incoming.emplace(l.to, i).second)
            throw FeederError(FeederErrc::cycle,
                              "bus " + std::to_string(l.to) + " is fed by more than one line");
        children[l.from].push_back(l.to);
    }

    std::vector<int> roots;
    for (const auto& [id, name] : names)
        if (!incoming.count(id)) roots.push_back(id);
    if (roots.empty()) throw FeederError(FeederErrc::cycle, "no substation (every bus has a parent)");
    if (roots.size() > 1)
        throw FeederError(FeederErrc::disconnected,
                          "bus " + std::to_string(roots[1]) + " is not connected to bus " +
                              std::to_string(roots[0]));

    RadialNetwork net;
    net.base_mva = d.base_mva;
    net.base_kv = d.base_kv;
    net.v0 = d.v0_pu;
    net.delta0 = d.angle0_rad;
    net.epsilon = d.epsilon_pu;

    std::map<int, int> internal;
    std::vector<int> stack{roots[0]};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        internal[id] = static_cast<int>(net.bus_id.size());
        net.bus_id.push_back(id);
        net.bus_name.push_back(names[id]);
        auto kids = children[id];
        std::sort(kids.rbegin(), kids.rend());
        for (int k : kids) stack.push_back(k);
    }
    if (net.bus_id.size() != names.size()) {
        for (const auto& [id, name] : names)
            if (!internal.count(id))
                throw FeederError(FeederErrc::cycle,
                                  "bus " + std::to_string(id) + " lies on a cycle");
    }

    const std::size_t n = net.bus_id.size() - 1;
    net.parent.resize(n);
    net.r.resize(n);
    net.x.resize(n);
    net.p_limit.resize(n);
    net.q_limit.resize(n);
    for (std::size_t k = 1; k <= n; ++k) {
        const auto& l = d.lines[incoming.at(net.bus_id[k])];
        net.parent[k - 1] = internal.at(l.from);
        net.r[k - 1] = l.r_pu;
        net.x[k - 1] = l.x_pu;
        net.p_limit[k - 1] = l.p_limit_pu;
        net.q_limit[k - 1] = l.q_limit_pu;
    }

    std::set<int> used;
    for (const auto& a : d.aggregators) {
        const auto it = internal.find(a.node);
        if (it == internal.end() || it->second == 0)
            throw FeederError(FeederErrc::unknown_aggregator_node,
                              a.label + " at bus " + std::to_string(a.node));
        if (!used.insert(it->second).second)
            throw FeederError(FeederErrc::malformed,
                              "two aggregators at bus " + std::to_string(a.node));
        net.aggregator_label.push_back(a.label);
        net.aggregator_node.push_back(it->second);
    }
    return net;
}

FeederDescription describe(const RadialNetwork& net)
{
    FeederDescription d;
    d.base_mva = net.base_mva;
    d.base_kv = net.base_kv;
    d.v0_pu = net.v0;
    d.angle0_rad = net.delta0;
    d.epsilon_pu = net.epsilon;
    for (std::size_t k = 0; k < net.bus_id.size(); ++k) d.buses.push_back({net.bus_id[k], net.bus_name[k]});
    for (std::size_t i = 0; i < net.node_count(); ++i)
        d.lines.push_back({net.bus_id[static_cast<std::size_t>(net.parent[i])], net.bus_id[i + 1], net.r[i],
                           net.x[i], net.p_limit[i], net.q_limit[i]});
    for (std::size_t a = 0; a < net.aggregator_count(); ++a)
        d.aggregators.push_back(
            {net.aggregator_label[a], net.bus_id[static_cast<std::size_t>(net.aggregator_node[a])]});
    return d;
}

RadialNetwork parse_feeder(std::string_view text)
{
    return build_network(parse_description(text));
}

RadialNetwork load_feeder(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FeederError(FeederErrc::malformed, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_feeder(ss.str());
}

std::string serialize_feeder(const RadialNetwork& net)
{
    const auto d = describe(net);
    std::ostringstream out;
    out << "[base]\n"
        << "mva = " << fmt_exact(d.base_mva) << '\n'
        << "kv = " << fmt_exact(d.base_kv) << '\n'
        << "v0_pu = " << fmt_exact(d.v0_pu) << '\n'
        << "angle0_rad = " << fmt_exact(d.angle0_rad) << "\n\n[nodes]\n";
    for (const auto& b : d.buses) out << b.id << ' ' << b.name << '\n';
    out << "\n[lines]\n";
    for (const auto& l : d.lines)
        out << l.from << ' ' << l.to << ' ' << fmt_exact(l.r_pu) << ' ' << fmt_exact(l.x_pu) << ' '
            << fmt_exact(l.p_limit_pu) << ' ' << fmt_exact(l.q_limit_pu) << '\n';
    out << "\n[aggregators]\n";
    for (const auto& a : d.aggregators) out << a.label << ' ' << a.node << '\n';
    out << "\n[limits]\nepsilon_pu = " << fmt_exact(d.epsilon_pu) << '\n';
    return out.str();
}

TopologyOperators build_topology(const RadialNetwork& net)
{
    const std::size_t n = net.node_count();
    TopologyOperators t;
    t.downstream.assign(n + 1, {});
    t.upstream.assign(n + 1, {});
    for (std::size_t k = 1; k <= n; ++k)
        for (int u = net.parent[k - 1]; u != 0; u = net.parent[static_cast<std::size_t>(u - 1)])
            t.upstream[k].push_back(u);
    for (std::size_t k = 1; k <= n; ++k) {
        std::sort(t.upstream[k].begin(), t.upstream[k].end());
        for (int u : t.upstream[k]) t.downstream[static_cast<std::size_t>(u)].push_back(static_cast<int>(k));
    }
    for (std::size_t k = 1; k <= n; ++k) t.downstream[0].push_back(static_cast<int>(k));

    t.tree = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    t.parent_difference = Eigen::MatrixXd::Zero(t.tree.rows(), t.tree.cols());
    t.substation_offset = Eigen::VectorXd::Zero(t.tree.rows());
    for (std::size_t k = 1; k <= n; ++k) {
        const auto i = static_cast<Eigen::Index>(k - 1);
        for (int l : t.downstream[k]) t.tree(i, l - 1) = 1.0;
        t.parent_difference(i, i) = -1.0;
        const int u = net.parent[k - 1];
        if (u == 0)
            t.substation_offset(i) = 1.0;
        else
            t.parent_difference(i, u - 1) = 1.0;
    }
    return t;
}

std::string bundled_feeder_path()
{
    return std::string(DLMP_DATA_DIR) + "/ieee37_modified.feeder";
}

} // namespace dlmp
