/**
 * Per-browser session state: the anonymous reader id, the consent flag,
 * and the queue of telemetry payloads awaiting delivery.
 *
 * No accounts anywhere: the session id is a random UUID created once per
 * browser profile and reused thereafter. All state lives in a pluggable
 * string key-value store (localStorage in the browser, a Map in tests).
 */

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const SESSION_KEY = "learnprof.sessionId";
const CONSENT_KEY = "learnprof.consent";
const QUEUE_KEY = "learnprof.pendingTelemetry";

export interface QueuedPost {
  path: string;
  body: unknown;
}

export class SessionState {
  constructor(
    private store: KeyValueStore,
    private makeUuid: () => string = () => crypto.randomUUID(),
  ) {}

  /** The stable anonymous reader id, created on first use. */
  sessionId(): string {
    let id = this.store.getItem(SESSION_KEY);
    if (!id) {
      id = this.makeUuid();
      this.store.setItem(SESSION_KEY, id);
    }
    return id;
  }

  hasConsent(): boolean {
    return this.store.getItem(CONSENT_KEY) === "granted";
  }

  grantConsent(): void {
    this.store.setItem(CONSENT_KEY, "granted");
  }

  pendingPosts(): QueuedPost[] {
    const raw = this.store.getItem(QUEUE_KEY);
    if (!raw) return [];
    try {
      const parsed = JSON.parse(raw);
      return Array.isArray(parsed) ? parsed : [];
    } catch {
      return [];
    }
  }

  enqueuePost(post: QueuedPost): void {
    const queue = this.pendingPosts();
    queue.push(post);
    this.store.setItem(QUEUE_KEY, JSON.stringify(queue));
  }

  replaceQueue(queue: QueuedPost[]): void {
    if (queue.length === 0) {
      this.store.removeItem(QUEUE_KEY);
    } else {
      this.store.setItem(QUEUE_KEY, JSON.stringify(queue));
    }
  }
}
