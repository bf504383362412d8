// Request-id bookkeeping: every outbound message gets a fresh id, and only
// the reply matching the newest issued id may update the UI. Anything older
// is stale (the server answered or superseded an earlier drag position).

import type { GenerationReply } from './protocol.js';

export class RequestTracker {
	private nextId = 1;
	private latestIssued = 0;

	issue(): number {
		this.latestIssued = this.nextId;
		this.nextId += 1;
		return this.latestIssued;
	}

	/** True when this reply corresponds to the newest in-flight request. */
	isCurrent(reply: GenerationReply): boolean {
		return reply.id !== null && reply.id === this.latestIssued;
	}

	/** Accept an ok reply only if it is current; stale/superseded are dropped. */
	shouldRender(reply: GenerationReply): boolean {
		return reply.status === 'ok' && this.isCurrent(reply);
	}
}
