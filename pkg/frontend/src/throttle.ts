// Trailing-edge rate limiter for knob-drag storms: at most one send per
// interval, and the newest pending payload always goes out last, so the
// server ends on the final knob position.

export type Clock = {
	now(): number;
	setTimeout(fn: () => void, ms: number): ReturnType<typeof setTimeout>;
	clearTimeout(handle: ReturnType<typeof setTimeout>): void;
};

const realClock: Clock = {
	now: () => Date.now(),
	setTimeout: (fn, ms) => setTimeout(fn, ms),
	clearTimeout: (h) => clearTimeout(h)
};

export class Throttle<T> {
	private lastSent = -Infinity;
	private pending: T | undefined;
	private timer: ReturnType<typeof setTimeout> | null = null;

	constructor(
		private readonly intervalMs: number,
		private readonly send: (payload: T) => void,
		private readonly clock: Clock = realClock
	) {}

	/** Queue a payload; sends now if the window allows, else replaces the pending one. */
	push(payload: T): void {
		const now = this.clock.now();
		if (now - this.lastSent >= this.intervalMs && this.timer === null) {
			this.lastSent = now;
			this.send(payload);
			return;
		}
		this.pending = payload;
		if (this.timer === null) {
			const wait = Math.max(0, this.lastSent + this.intervalMs - now);
			this.timer = this.clock.setTimeout(() => this.flush(), wait);
		}
	}

	private flush(): void {
		this.timer = null;
		if (this.pending === undefined) return;
		const payload = this.pending;
		this.pending = undefined;
		this.lastSent = this.clock.now();
		this.send(payload);
	}

	dispose(): void {
		if (this.timer !== null) {
			this.clock.clearTimeout(this.timer);
			this.timer = null;
		}
		this.pending = undefined;
	}
}

/** One send per 40 ms: a 1 s drag storm emits at most 1 + ceil(1000/40) = 26
 * messages, comfortably inside the 30 msg/s budget even with the trailing
 * flush. */
export const CONTROL_SEND_INTERVAL_MS = 40;
