/** Spawns the real review service for integration tests. */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

const REPO_ROOT = join(__dirname, "..", "..");

export interface ServiceHandle {
  baseUrl: string;
  port: number;
  storeDir: string;
  fixtureDir: string;
  stop(): Promise<void>;
  restart(): Promise<void>;
}

async function waitReady(baseUrl: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${baseUrl}/api/sessions`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error(`review service did not come up at ${baseUrl}`);
}

export function makeFixture(): string {
  const dir = mkdtempSync(join(tmpdir(), "labelaudit-ui-"));
  execFileSync("python3", [join(__dirname, "fixtures", "make_fixture.py"), dir], {
    cwd: REPO_ROOT,
  });
  return dir;
}

export async function startService(): Promise<ServiceHandle> {
  const fixtureDir = makeFixture();
  const storeDir = join(fixtureDir, "store");
  const port = 8700 + Math.floor(Math.random() * 200);
  const baseUrl = `http://127.0.0.1:${port}`;
  let child: ChildProcess | null = null;

  const launch = async () => {
    child = spawn(
      "python3",
      [
        "-m",
        "labelaudit",
        "review-serve",
        "--store-dir",
        storeDir,
        "--port",
        String(port),
        "--host",
        "127.0.0.1",
      ],
      { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
    );
    await waitReady(baseUrl);
  };

  const stop = async () => {
    if (!child) return;
    const exited = new Promise<void>((resolve) => child?.once("exit", () => resolve()));
    child.kill("SIGTERM");
    await Promise.race([exited, new Promise((resolve) => setTimeout(resolve, 3000))]);
    if (child.exitCode === null) child.kill("SIGKILL");
    await exited;
    child = null;
  };

  await launch();
  return {
    baseUrl,
    port,
    storeDir,
    fixtureDir,
    stop,
    restart: async () => {
      await stop();
      await launch();
    },
  };
}
