import { describe, expect, it } from "vitest";

import { MessageLog, controlMessage, gazeMessage, parseMessage } from "../src/wire.js";

describe("parseMessage", () => {
  it("accepts a well-formed server message", () => {
    const msg = parseMessage(
      JSON.stringify({ type: "frame", session_id: "s", seq: 3, payload: { frame_index: 0 } }),
    );
    expect(msg.type).toBe("frame");
    expect(msg.seq).toBe(3);
  });

  it("rejects non-JSON, unknown types, and missing fields", () => {
    expect(() => parseMessage("nope")).toThrow(/not JSON/);
    expect(() => parseMessage(JSON.stringify({ type: "bogus", seq: 1, payload: {} }))).toThrow(/unknown type/);
    expect(() => parseMessage(JSON.stringify({ type: "frame", payload: {} }))).toThrow(/seq/);
    expect(() => parseMessage(JSON.stringify({ type: "frame", seq: 1 }))).toThrow(/payload/);
  });
});

describe("client-to-server encoders", () => {
  it("encodes control and gaze messages", () => {
    expect(JSON.parse(controlMessage("play", { rate_hz: 30 }))).toEqual({
      type: "control",
      payload: { action: "play", rate_hz: 30 },
    });
    expect(JSON.parse(gazeMessage(1.5, 0.25, 0.75))).toEqual({
      type: "gaze",
      payload: { t: 1.5, x: 0.25, y: 0.75, valid: true },
    });
  });
});

describe("MessageLog", () => {
  const msg = (seq: number) =>
    parseMessage(JSON.stringify({ type: "frame", session_id: "s", seq, payload: {} }));

  it("demands strictly increasing sequence numbers", () => {
    const log = new MessageLog();
    log.recordServer(msg(1));
    log.recordServer(msg(2));
    expect(() => log.recordServer(msg(2))).toThrow(/not increasing/);
  });

  it("audits that renders only follow server messages", () => {
    const ok = new MessageLog();
    ok.recordServer(msg(1));
    ok.recordRender("frame 0");
    expect(ok.rendersFollowServerMessages()).toBe(true);

    const bad = new MessageLog();
    bad.recordRender("frame 0");
    expect(bad.rendersFollowServerMessages()).toBe(false);
  });
});
