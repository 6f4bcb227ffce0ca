// Park-and-retry queue for submissions that hit network failures.
// Items are kept in order; a flush stops at the first item that still
// fails with a network error so nothing is submitted out of order.

export interface QueueItem<T> {
  payload: T;
  attempts: number;
}

export type Sender<T> = (payload: T) => Promise<void>;

export function isNetworkError(error: unknown): boolean {
  // fetch rejects with TypeError on connection failures; our ApiError
  // carries an HTTP status instead and must not be retried blindly.
  return error instanceof TypeError || (error instanceof Error && !("status" in error));
}

export class RetryQueue<T> {
  private items: QueueItem<T>[] = [];

  constructor(private send: Sender<T>) {}

  get pending(): number {
    return this.items.length;
  }

  /** Try to send immediately; park the payload on network failure. */
  async submit(payload: T): Promise<"sent" | "queued"> {
    if (this.items.length > 0) {
      // keep ordering: earlier parked items must go first
      this.items.push({ payload, attempts: 0 });
      return "queued";
    }
    try {
      await this.send(payload);
      return "sent";
    } catch (error) {
      if (isNetworkError(error)) {
        this.items.push({ payload, attempts: 1 });
        return "queued";
      }
      throw error;
    }
  }

  /** Retry parked items in order; stops at the first persistent failure. */
  async flush(): Promise<number> {
    let sent = 0;
    while (this.items.length > 0) {
      const item = this.items[0]!;
      try {
        await this.send(item.payload);
        this.items.shift();
        sent += 1;
      } catch (error) {
        if (isNetworkError(error)) {
          item.attempts += 1;
          break;
        }
        // server rejected it for real: drop from the queue and surface
        this.items.shift();
        throw error;
      }
    }
    return sent;
  }
}
