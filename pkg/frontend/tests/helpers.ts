/**
 * Test-side plumbing: a newline-JSON TCP transport (the bridge's line
 * mode) and spawn helpers for a live server + bridge fixture pair.
 */

import { ChildProcess, spawn } from "node:child_process";
import { once } from "node:events";
import * as net from "node:net";

import type { BridgeMessage, BridgeRequest, Transport } from "../src/protocol.js";

export class TcpTransport implements Transport {
  private handlers: Array<(msg: BridgeMessage) => void> = [];
  private buf = "";

  private constructor(private sock: net.Socket) {
    sock.setEncoding("utf-8");
    sock.on("data", (chunk: string) => {
      this.buf += chunk;
      let nl: number;
      while ((nl = this.buf.indexOf("\n")) >= 0) {
        const line = this.buf.slice(0, nl).trim();
        this.buf = this.buf.slice(nl + 1);
        if (!line) continue;
        const msg = JSON.parse(line) as BridgeMessage;
        for (const h of this.handlers) h(msg);
      }
    });
  }

  static connect(port: number, host = "127.0.0.1"): Promise<TcpTransport> {
    return new Promise((resolve, reject) => {
      const sock = net.createConnection(port, host);
      sock.once("connect", () => resolve(new TcpTransport(sock)));
      sock.once("error", reject);
    });
  }

  send(obj: BridgeRequest): void {
    this.sock.write(JSON.stringify(obj) + "\n");
  }

  onMessage(handler: (msg: BridgeMessage) => void): void {
    this.handlers.push(handler);
  }

  close(): void {
    this.sock.destroy();
  }
}

export interface Fixture {
  uiPort: number;
  stop(): Promise<void>;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const port = (srv.address() as net.AddressInfo).port;
      srv.close(() => resolve(port));
    });
    srv.once("error", reject);
  });
}

function waitForLine(proc: ChildProcess, needle: string, ms: number): Promise<void> {
  return new Promise((resolve, reject) => {
    let out = "";
    const timer = setTimeout(
      () => reject(new Error(`timed out waiting for "${needle}"; got: ${out}`)),
      ms,
    );
    const onData = (chunk: Buffer) => {
      out += chunk.toString();
      if (out.includes(needle)) {
        clearTimeout(timer);
        resolve();
      }
    };
    proc.stdout?.on("data", onData);
    proc.stderr?.on("data", onData);
    proc.once("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`process exited early (${code}): ${out}`));
    });
  });
}

async function waitForTcp(port: number, ms: number): Promise<void> {
  const deadline = Date.now() + ms;
  for (;;) {
    try {
      const t = await TcpTransport.connect(port);
      t.close();
      return;
    } catch {
      if (Date.now() > deadline) throw new Error(`ui port ${port} never opened`);
      await new Promise((r) => setTimeout(r, 100));
    }
  }
}

/** Start steer-server + steer-bridge on a generated mesh file. */
export async function startFixture(meshScript: string): Promise<Fixture> {
  const meshPath = `/tmp/meshsteer-ui-${process.pid}-${Math.random()
    .toString(36)
    .slice(2)}.tet`;
  const gen = spawn("python3", [meshScript, meshPath], { stdio: "pipe" });
  const [code] = (await once(gen, "exit")) as [number];
  if (code !== 0) throw new Error(`mesh generation failed (${code})`);

  const serverPort = await freePort();
  const srv = spawn(
    "steer-server",
    ["--mesh", meshPath, "--parts", "1", "--port", String(serverPort)],
    { stdio: "pipe" },
  );
  await waitForLine(srv, "listening on port", 60_000);

  const uiPort = await freePort();
  const bridge = spawn(
    "steer-bridge",
    ["--server", `127.0.0.1:${serverPort}`, "--ui-port", String(uiPort)],
    { stdio: "pipe" },
  );
  await waitForTcp(uiPort, 60_000);

  return {
    uiPort,
    stop: async () => {
      bridge.kill("SIGKILL");
      srv.kill("SIGKILL");
      await Promise.allSettled([once(bridge, "exit"), once(srv, "exit")]);
    },
  };
}
