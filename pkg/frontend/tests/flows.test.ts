// Scripted end-to-end flows against the live mock-backed service spawned
// in global-setup. The DOM comes from the test environment; the console
// under test performs real HTTP calls and consumes the real event stream.

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { SessionConsole } from "../src/app";
import { ApiClient } from "../src/client";
import { BASE_URL } from "./global-setup";
import { DOG_WHISTLE_QUERY, MOOD_QUERY, PERSUASIVE_QUERY, POSTS, TWEETS } from "./data";

let container: HTMLElement;
let consoles: SessionConsole[] = [];

beforeEach(() => {
  document.body.innerHTML = '<div id="panel"></div>';
  container = document.getElementById("panel") as HTMLElement;
});

afterEach(() => {
  for (const console_ of consoles) {
    console_.stop();
  }
  consoles = [];
});

function makeConsole(): SessionConsole {
  const console_ = new SessionConsole(new ApiClient(BASE_URL), container);
  consoles.push(console_);
  return console_;
}

async function waitFor(predicate: () => boolean, what: string, timeoutMs = 15_000) {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await new Promise((resolve) => setTimeout(resolve, 40));
  }
  throw new Error(`timed out waiting for ${what}`);
}

describe("vague query flow", () => {
  it("renders alternatives, accepts a choice, and reaches a result grid", async () => {
    const console_ = makeConsole();
    await console_.start(MOOD_QUERY, TWEETS, "Tweet text");

    await waitFor(
      () => container.querySelectorAll(".alternative-button").length >= 3,
      "alternative buttons",
    );
    const vaguePanel = container.querySelector("[data-verdict=vague]");
    expect(vaguePanel?.textContent).toContain("data-insufficiency");

    const buttons = Array.from(
      container.querySelectorAll<HTMLButtonElement>(".alternative-button"),
    );
    expect(buttons.every((b) => !b.disabled)).toBe(true);
    const emotionIndex = buttons.findIndex((b) =>
      (b.textContent ?? "").includes("emotion distribution"),
    );
    expect(emotionIndex).toBeGreaterThanOrEqual(0);
    buttons[emotionIndex].click();

    await waitFor(
      () => container.querySelectorAll(".result-grid tbody tr").length > 0,
      "result grid rows",
    );
    const headers = Array.from(container.querySelectorAll(".result-grid th")).map(
      (th) => th.textContent,
    );
    expect(headers).toEqual(["emotion", "count"]);
    const view = console_.current();
    expect(view.status).toBe("done");
    expect(view.result?.rows.length).toBeGreaterThan(0);

    // stage timeline shows the annotation pass
    const stageLabels = Array.from(container.querySelectorAll(".stage")).map(
      (li) => li.getAttribute("data-stage"),
    );
    expect(stageLabels).toContain("table_generation");
    expect(stageLabels).toContain("result_display");

    // once running/done, every decision control is gone or disabled
    const remaining = Array.from(
      container.querySelectorAll<HTMLButtonElement>(".alternative-button"),
    );
    expect(remaining.every((b) => b.disabled)).toBe(true);
  });
});

describe("numeric warning flow", () => {
  it("proceeds past the warning and shows the resolved placeholder", async () => {
    const console_ = makeConsole();
    await console_.start(PERSUASIVE_QUERY, POSTS, "Reddit post text");

    await waitFor(
      () => container.querySelector("[data-verdict=numeric_underspecified]") !== null,
      "warning panel",
    );
    expect(container.textContent).toContain("persuasion_effect_score");

    const proceed = container.querySelector<HTMLButtonElement>(".proceed-button");
    expect(proceed).not.toBeNull();
    expect(proceed!.disabled).toBe(false);
    proceed!.click();

    await waitFor(
      () => container.querySelectorAll(".result-grid tbody tr").length > 0,
      "result grid rows",
    );
    const notes = container.querySelector(".resolution-notes");
    expect(notes?.textContent).toContain("@X@");
    expect(notes?.textContent).toContain("0.9 quantile");

    const costRows = container.querySelectorAll(".cost-grid tbody tr[data-stage]");
    expect(costRows.length).toBe(4);
  });
});

describe("dog whistle graph", () => {
  it("shows exactly the three derivation edges", async () => {
    const console_ = makeConsole();
    await console_.start(DOG_WHISTLE_QUERY, TWEETS, "Tweet text");

    // settled = the result grid is rendered from the final fetches
    await waitFor(
      () => container.querySelectorAll(".result-grid tbody tr").length > 0,
      "session completion",
    );
    const view = console_.current();
    expect(view.status).toBe("done");
    expect(view.graph.edges).toHaveLength(3);
    const byFunction = new Map(view.graph.edges.map((e) => [e.function, e]));
    const nodeName = (id: string) => view.graph.nodes.find((n) => n.id === id)?.name;
    expect(nodeName(byFunction.get("dog_whistle_extractor")!.inputs[0])).toBe("tweet_text");
    expect(nodeName(byFunction.get("dog_whistle_extractor")!.output)).toBe("dog_whistle");
    expect(nodeName(byFunction.get("persona_ingroup_identifier")!.inputs[0])).toBe("dog_whistle");
    expect(nodeName(byFunction.get("dog_whistle_type_classifier")!.inputs[0])).toBe("dog_whistle");

    const lines = container.querySelectorAll(".graph-svg line");
    expect(lines.length).toBe(3);
    expect(
      Array.from(lines).every((l) => l.getAttribute("data-kind") === "execute"),
    ).toBe(true);

    // the rendered layout is layered left to right by derivation depth
    const columns = Array.from(container.querySelectorAll(".graph-node")).map((g) =>
      g.getAttribute("data-column"),
    );
    expect(columns[0]).toBe("tweet_text");
  });
});

describe("decision endpoint statefulness", () => {
  it("mirrors the server's 409s: controls are inert exactly when the API rejects", async () => {
    const client = new ApiClient(BASE_URL);
    const console_ = makeConsole();
    const sessionId = await console_.start(DOG_WHISTLE_QUERY, TWEETS, "Tweet text");
    await waitFor(
      () => container.querySelectorAll(".result-grid tbody tr").length > 0,
      "session completion",
    );

    // the API rejects decisions on a finished clear session
    let status = 0;
    try {
      await client.postDecision(sessionId, { action: "proceed" });
    } catch (error) {
      status = (error as { status: number }).status;
    }
    expect(status).toBe(409);

    // and the rendered view exposes no live decision controls
    const buttons = Array.from(
      container.querySelectorAll<HTMLButtonElement>(
        ".proceed-button, .respecify-button, .alternative-button",
      ),
    );
    expect(buttons.filter((b) => !b.disabled)).toHaveLength(0);
  });

  it("surfaces a server rejection as an error banner without corrupting state", async () => {
    const console_ = makeConsole();
    await console_.start(MOOD_QUERY, TWEETS, "Tweet text");
    await waitFor(
      () => console_.current().status === "awaiting_decision",
      "awaiting decision",
    );
    // a decision the verdict does not accept
    await console_.decide({ action: "proceed" });
    await waitFor(
      () => container.querySelector(".error-banner") !== null,
      "error banner",
    );
    expect(console_.current().status).toBe("awaiting_decision");
  });
});
