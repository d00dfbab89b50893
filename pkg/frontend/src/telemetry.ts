/**
 * Telemetry delivery with an offline queue.
 *
 * At most one POST is in flight at a time; failures park the payload in the
 * session's persistent queue, which is drained FIFO on the next flush
 * (typically the next page load). Nothing is ever sent before the reader
 * has granted consent.
 */

import { SessionState } from "./session";

export type PostFn = (url: string, body: unknown) => Promise<boolean>;

const fetchPost: PostFn = async (url, body) => {
  try {
    const response = await fetch(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return response.ok;
  } catch {
    return false;
  }
};

export class TelemetryClient {
  private inFlight = false;

  constructor(
    private baseUrl: string,
    private session: SessionState,
    private post: PostFn = fetchPost,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async send(path: string, body: unknown): Promise<boolean> {
    if (!this.session.hasConsent()) {
      throw new Error("telemetry before consent");
    }
    if (this.inFlight) {
      this.session.enqueuePost({ path, body });
      return false;
    }
    this.inFlight = true;
    try {
      const delivered = await this.post(this.url(path), body);
      if (!delivered) {
        this.session.enqueuePost({ path, body });
      }
      return delivered;
    } finally {
      this.inFlight = false;
    }
  }

  /** Retry queued payloads in order; stop at the first failure. */
  async flushQueue(): Promise<number> {
    if (!this.session.hasConsent()) {
      return 0;
    }
    const queue = this.session.pendingPosts();
    let delivered = 0;
    while (delivered < queue.length) {
      const { path, body } = queue[delivered];
      if (!(await this.post(this.url(path), body))) {
        break;
      }
      delivered++;
    }
    this.session.replaceQueue(queue.slice(delivered));
    return delivered;
  }
}
