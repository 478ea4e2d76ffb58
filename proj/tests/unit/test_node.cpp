#include <doctest.h>

#include <fstream>
#include <thread>

#include "helpers.hpp"
#include "mosden/errors.hpp"
#include "mosden/net.hpp"
#include "mosden/node.hpp"
#include "mosden/server.hpp"

using namespace mosden;
using testutil::kT0;

namespace {

struct ManualNode {
  std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>(kT0);
  std::shared_ptr<testutil::RecordingDelivery> sink = std::make_shared<testutil::RecordingDelivery>();
  std::unique_ptr<Node> node;

  explicit ManualNode(NodeConfig cfg = {}) {
    if (cfg.node_id == "node") cfg.node_id = "n1";
    node = std::make_unique<Node>(cfg, clock, sink);
  }
  Node* operator->() { return node.get(); }
};

Subscription push_sub(const std::string& vs, std::int64_t interval, std::int64_t expiry,
                      PayloadKind payload = PayloadKind::Processed) {
  Subscription s;
  s.vs_name = vs;
  s.mode = SubscriptionMode::Push;
  s.delivery_endpoint = "http://127.0.0.1:9/ingest";
  s.interval_ms = interval;
  s.expiry = expiry;
  s.payload = payload;
  return s;
}

double expected_avg(const SimProfile& p, std::int64_t first, std::int64_t last) {
  double sum = 0;
  for (auto i = first; i <= last; ++i) sum += sim_value(p, i);
  return sum / static_cast<double>(last - first + 1);
}

} // namespace

TEST_CASE("node config parsing") {
  testutil::TempDir dir("cfg");
  std::filesystem::create_directories(dir / "plugins");
  auto c = node_config_from_json(parse_json(R"({"node_id":"edge-1","listen":"0.0.0.0:8081","plugin_dir":"plugins",
      "data_dir":"data","cost_model":{"c_proc_per_sample":1,"c_radio_wake":2,"c_per_byte":0.5},
      "registry_url":"http://localhost:9000","plugin_budget_bytes":60000,"plugin_timeout_ms":250})"),
                                 dir.path());
  CHECK(c.node_id == "edge-1");
  CHECK(c.listen_host == "0.0.0.0");
  CHECK(c.listen_port == 8081);
  CHECK(*c.plugin_dir == dir / "plugins");
  CHECK(*c.data_dir == dir / "data");
  CHECK(c.cost_model.c_radio_wake == 2.0);
  CHECK(*c.plugin_budget_bytes == 60000);
  CHECK(c.host.call_timeout.count() == 250);
  CHECK_THROWS_AS(node_config_from_json(parse_json(R"({"listen":"x:1"})")), ConfigError);
  CHECK_THROWS_AS(node_config_from_json(parse_json(R"({"node_id":"a","listen":"nope"})")), ConfigError);
  CHECK_THROWS_AS(node_config_from_json(parse_json(R"({"node_id":"a","plugin_dir":"/no/such/dir"})")), ConfigError);
  CHECK_THROWS_AS(node_config_from_json(parse_json(R"({"node_id":"a","registry_url":"ftp://x"})")), ConfigError);
}

TEST_CASE("delivery wire form") {
  PushDelivery d{"n1-s1", 4, kT0, parse_json(R"({"kind":"raw"})"), 0};
  auto back = delivery_from_json(to_json(d));
  CHECK(back.subscription_id == "n1-s1");
  CHECK(back.sequence_no == 4);
  CHECK(back.payload["kind"] == "raw");
  CHECK_THROWS(delivery_from_json(parse_json(R"({"subscription_id":"a","sequence_no":1,"sent_at":0})")));
}

TEST_CASE("deliver retries on the backoff schedule") {
  ManualClock clock(0);
  testutil::RecordingDelivery sink;
  std::vector<std::int64_t> slept;
  auto sleep = [&](std::int64_t ms) {
    slept.push_back(ms);
    clock.advance(ms);
    return true;
  };
  PushDelivery d{"s", 1, 0, Json::object(), 0};
  sink.fail_first = 2;
  auto r = deliver(sink, "http://x:1/", d, {250, 500, 1000}, clock, 10'000, sleep);
  CHECK(r.outcome == DeliveryOutcome::Retried);
  CHECK(d.attempts == 3);
  CHECK(slept == std::vector<std::int64_t>{250, 500});
  CHECK(r.bytes == sink.bodies.at(0).size());

  sink.fail_all = true;
  PushDelivery d2{"s", 2, 0, Json::object(), 0};
  slept.clear();
  CHECK(deliver(sink, "http://x:1/", d2, {250, 500, 1000}, clock, 1'000'000, sleep).outcome == DeliveryOutcome::Dropped);
  CHECK(d2.attempts == 4);

  // no attempt past the expiry
  PushDelivery d3{"s", 3, 0, Json::object(), 0};
  CHECK(deliver(sink, "http://x:1/", d3, {250, 500, 1000}, clock, clock.now_ms() + 300, sleep).outcome ==
        DeliveryOutcome::Dropped);
  CHECK(d3.attempts == 2);
}

TEST_CASE("activation and pulls") {
  ManualNode n;
  auto p = testutil::profile("ramp");
  n->activate(testutil::sim_vsd("room", p, 1000, 60'000));
  CHECK_THROWS_AS(n->activate(testutil::sim_vsd("room", p)), DuplicateVirtualSensor);
  auto bad = testutil::sim_vsd("bad", p);
  bad.aggregations = {{"humidity", AggFn::Avg}};
  CHECK_THROWS_AS(n->activate(bad), FieldNotInSchema);

  CHECK(n->pull_data("room", {}).is_null()); // nothing sampled yet at t0
  n->advance_to(kT0 + 59'000);
  CHECK(n->store("room")->size() == 60);

  auto latest = n->pull_data("room", {});
  CHECK(latest["timestamp"] == kT0 + 59'000);
  CHECK(latest["values"]["temp"].get<double>() == doctest::Approx(sim_value(p, 59)));

  PullRequest raw{PullRequest::Mode::Raw, WindowSpec{WindowKind::Count, 5}, std::nullopt};
  auto r = n->pull_data("room", raw);
  CHECK(r["elements"].size() == 5);
  CHECK(r["next_seq"] == 60);
  PullRequest since{PullRequest::Mode::Raw, std::nullopt, 57};
  CHECK(n->pull_data("room", since)["elements"].size() == 3);

  PullRequest processed{PullRequest::Mode::Processed, WindowSpec{WindowKind::Time, 10'000}, std::nullopt};
  auto w = window_result_from_json(n->pull_data("room", processed));
  CHECK(w.sample_count == 10);
  CHECK(std::get<double>(**w.find("temp.avg")) == doctest::Approx(expected_avg(p, 50, 59)));

  CHECK_THROWS_AS(n->pull_data("ghost", {}), UnknownVirtualSensor);
  auto sensors = n->list_sensors();
  REQUIRE(sensors.size() == 1);
  CHECK(sensors[0].node_id == "n1");
  CHECK(sensors[0].vs_name == "room");
}

TEST_CASE("processed push subscription over three minutes") {
  ManualNode n;
  auto p = testutil::profile("ramp");
  n->activate(testutil::sim_vsd("room", p, 1000, 60'000));
  auto sub = n->create_subscription(push_sub("room", 60'000, kT0 + 180'000));
  CHECK(sub.id == "n1-s1");
  n->advance_to(kT0 + 200'000);

  auto got = n.sink->deliveries();
  REQUIRE(got.size() == 3);
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto end = static_cast<std::int64_t>(i + 1) * 60;
    CHECK(got[i].sequence_no == i + 1);
    CHECK(got[i].sent_at == kT0 + end * 1000);
    auto w = window_result_from_json(got[i].payload["result"]);
    CHECK(w.sample_count == 60);
    CHECK(std::get<double>(**w.find("temp.avg")) == doctest::Approx(expected_avg(p, end - 59, end)));
  }
  auto m = n->metrics();
  CHECK(m["messages_sent"] == 3);
  CHECK(m["samples_ok"] == 201);
  CHECK(n->subscriptions().empty());
}

TEST_CASE("subscription validation") {
  ManualNode n;
  n->activate(testutil::sim_vsd("room", testutil::profile("constant")));
  CHECK_THROWS_AS(n->create_subscription(push_sub("room", 1000, kT0)), ExpiredOnArrival);
  CHECK_THROWS_AS(n->create_subscription(push_sub("ghost", 1000, kT0 + 10)), UnknownVirtualSensor);
  auto pull = push_sub("room", 1000, kT0 + 10);
  pull.mode = SubscriptionMode::Pull;
  pull.delivery_endpoint.reset();
  CHECK_THROWS_AS(n->create_subscription(pull), BadRequest);
  auto endpoint = push_sub("room", 1000, kT0 + 10);
  endpoint.delivery_endpoint = "https://example.org/x";
  CHECK_THROWS_AS(n->create_subscription(endpoint), BadEndpoint);
  auto field = push_sub("room", 1000, kT0 + 10);
  field.aggregations = {{"pressure", AggFn::Max}};
  CHECK_THROWS_AS(n->create_subscription(field), FieldNotInSchema);

  auto keyed = push_sub("room", 60'000, kT0 + 600'000);
  keyed.idempotency_key = "r1/room";
  auto a = n->create_subscription(keyed);
  auto b = n->create_subscription(keyed);
  CHECK(a.id == b.id);
  CHECK(n->subscriptions().size() == 1);
  n->cancel_subscription(a.id);
  CHECK(n->subscriptions().empty());
  CHECK_THROWS_AS(n->cancel_subscription(a.id), UnknownSubscription);
}

TEST_CASE("processed deliveries do not outpace the emit interval") {
  ManualNode n;
  n->activate(testutil::sim_vsd("room", testutil::profile("constant"), 1000, 30'000));
  n->create_subscription(push_sub("room", 1000, kT0 + 90'000));
  n->advance_to(kT0 + 90'000);
  CHECK(n.sink->deliveries().size() == 3);
}

TEST_CASE("raw push subscription streams new elements only") {
  ManualNode n;
  n->activate(testutil::sim_vsd("room", testutil::profile("ramp"), 1000));
  n->advance_to(kT0 + 4'000);
  n->create_subscription(push_sub("room", 5'000, kT0 + 20'000, PayloadKind::Raw));
  n->advance_to(kT0 + 20'000);
  auto got = n.sink->deliveries();
  REQUIRE(got.size() == 3);
  std::int64_t previous = kT0 + 4'000;
  std::size_t total = 0;
  for (const auto& d : got) {
    CHECK(d.payload["kind"] == "raw");
    for (const auto& e : d.payload["elements"]) {
      CHECK(e["timestamp"].get<std::int64_t>() > previous);
      previous = e["timestamp"].get<std::int64_t>();
      ++total;
    }
  }
  CHECK(total == 15);
}

TEST_CASE("failed deliveries are retried and then dropped") {
  ManualNode n;
  n->activate(testutil::sim_vsd("room", testutil::profile("constant"), 1000, 10'000));
  n.sink->fail_first = 2;
  n->create_subscription(push_sub("room", 10'000, kT0 + 20'000));
  n->advance_to(kT0 + 10'000);
  CHECK(n.sink->deliveries().size() == 1);
  CHECK(n->metrics()["delivery_retries"] == 2);
  n.sink->fail_all = true;
  n->advance_to(kT0 + 20'000);
  auto m = n->metrics();
  CHECK(m["delivery_drops"] == 1);
  CHECK(m["messages_sent"] == 1);
}

TEST_CASE("deactivation cancels subscriptions with a notice") {
  ManualNode n;
  n->activate(testutil::sim_vsd("room", testutil::profile("constant"), 1000, 10'000));
  n->create_subscription(push_sub("room", 10'000, kT0 + 100'000));
  n->advance_to(kT0 + 10'000);
  n->deactivate("room");
  auto got = n.sink->deliveries();
  REQUIRE(got.size() == 2);
  CHECK(got[1].payload["kind"] == "cancelled");
  CHECK(got[1].sequence_no == 2);
  CHECK(n->subscriptions().empty());
  CHECK_THROWS_AS(n->deactivate("room"), UnknownVirtualSensor);
  CHECK(n->pull_data("room", {}).is_object()); // history stays readable
}

TEST_CASE("journal and subscriptions survive a restart") {
  testutil::TempDir dir("persist");
  NodeConfig cfg;
  cfg.node_id = "n1";
  cfg.data_dir = dir.path();
  auto vsd = testutil::sim_vsd("room", testutil::profile("constant", 1, 21.0), 20, 60'000);
  std::string sub_id;
  {
    Node node(cfg, system_clock(), std::make_shared<testutil::RecordingDelivery>());
    node.activate(vsd);
    node.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(250));
    sub_id = node.create_subscription(push_sub("room", 60'000, system_clock()->now_ms() + 600'000)).id;
    node.stop();
    CHECK(std::filesystem::exists(dir / "subscriptions" / (sub_id + ".json")));
  }
  Node node(cfg, system_clock(), std::make_shared<testutil::RecordingDelivery>());
  node.activate(vsd);
  CHECK(node.store("room")->size() >= 3);
  node.start();
  auto subs = node.subscriptions();
  REQUIRE(subs.size() == 1);
  CHECK(subs[0].id == sub_id);
  auto next = node.create_subscription(push_sub("room", 60'000, system_clock()->now_ms() + 600'000));
  CHECK(next.id != sub_id);
  node.stop();
}

TEST_CASE("http api") {
  auto clock = std::make_shared<ManualClock>(kT0);
  NodeConfig cfg;
  cfg.node_id = "n1";
  Node node(cfg, clock, std::make_shared<testutil::RecordingDelivery>());
  node.activate(testutil::sim_vsd("room", testutil::profile("ramp"), 1000, 60'000));
  node.advance_to(kT0 + 9'000);
  NodeServer server(node);
  server.start();
  auto base = parse_url(server.base_url());
  CHECK(node.public_url() == server.base_url());

  auto health = http_get(base, "/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto sensors = http_get(base, "/sensors");
  REQUIRE(sensors);
  CHECK(parse_json(sensors->body).size() == 1);

  auto raw = http_get(base, "/sensors/room/data?mode=raw&window=count:4");
  REQUIRE(raw);
  CHECK(parse_json(raw->body)["elements"].size() == 4);
  auto proc = http_get(base, "/sensors/room/data?mode=processed&window=time:5000");
  REQUIRE(proc);
  CHECK(parse_json(proc->body)["sample_count"] == 5);

  auto missing = http_get(base, "/sensors/ghost/data");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(parse_json(missing->body)["error"] == "UnknownVirtualSensor");
  auto bad_window = http_get(base, "/sensors/room/data?mode=raw&window=weeks:2");
  REQUIRE(bad_window);
  CHECK(bad_window->status == 400);

  auto body = to_json(push_sub("room", 60'000, kT0 + 60'000)).dump();
  auto created = http_post(base, "/subscriptions", body);
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto id = parse_json(created->body)["id"].get<std::string>();
  auto listed = http_get(base, "/subscriptions");
  REQUIRE(listed);
  CHECK(parse_json(listed->body).size() == 1);

  auto expired = http_post(base, "/subscriptions", to_json(push_sub("room", 1000, kT0 - 1)).dump());
  REQUIRE(expired);
  CHECK(expired->status == 400);
  CHECK(parse_json(expired->body)["error"] == "ExpiredOnArrival");
  auto garbage = http_post(base, "/subscriptions", "{");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);

  auto del = http_delete(base, "/subscriptions/" + id);
  REQUIRE(del);
  CHECK(del->status == 204);
  auto del_again = http_delete(base, "/subscriptions/" + id);
  REQUIRE(del_again);
  CHECK(del_again->status == 404);

  auto metrics = http_get(base, "/metrics");
  REQUIRE(metrics);
  auto m = parse_json(metrics->body);
  CHECK(m["samples_ok"] == 10);
  CHECK(m["l2_ms"]["count"].get<int>() >= 2);
  server.stop();
}

TEST_CASE("status codes") {
  CHECK(http_status_for("UnknownVirtualSensor") == 404);
  CHECK(http_status_for("UnknownSubscription") == 404);
  CHECK(http_status_for("DuplicateVirtualSensor") == 409);
  CHECK(http_status_for("SchemaError") == 400);
  CHECK(http_status_for("ExpiredOnArrival") == 400);
  CHECK(http_status_for("PluginTimeout") == 500);
}

TEST_CASE("peer streaming pulls from another node") {
  auto clock = std::make_shared<ManualClock>(kT0);
  NodeConfig up_cfg;
  up_cfg.node_id = "up";
  Node upstream(up_cfg, clock, std::make_shared<testutil::RecordingDelivery>());
  auto p = testutil::profile("ramp");
  upstream.activate(testutil::sim_vsd("room", p, 1000));
  upstream.advance_to(kT0 + 2'000);
  NodeServer server(upstream);
  server.start();

  NodeConfig down_cfg;
  down_cfg.node_id = "down";
  Node downstream(down_cfg, clock, std::make_shared<testutil::RecordingDelivery>());
  auto local = testutil::sim_vsd("mirror", p, 1000);
  downstream.peer_stream(server.base_url(), "room", local);
  downstream.advance_to(kT0 + 2'000);
  CHECK(downstream.store("mirror")->size() == 1);
  CHECK(downstream.pull_data("mirror", {})["timestamp"] == kT0 + 2'000);

  for (auto t = kT0 + 3'000; t <= kT0 + 5'000; t += 1'000) {
    upstream.advance_to(t);
    downstream.advance_to(t);
  }
  auto mirrored = downstream.store("mirror")->snapshot();
  REQUIRE(mirrored.size() == 4);
  CHECK(mirrored.back().timestamp == kT0 + 5'000);
  auto descriptor = downstream.list_sensors().at(0);
  CHECK(descriptor.metadata.at("source") == server.base_url() + "/room");
  server.stop();
}
